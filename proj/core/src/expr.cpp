#include "miold/expr/expr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <type_traits>

#include "miold/errors.hpp"

namespace miold::expr {

namespace {

std::size_t mix(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

std::size_t hash_rational(const Rational& r) {
  std::size_t h = std::hash<long>{}(static_cast<long>(mpz_get_si(r.get_num_mpz_t())));
  h = mix(h, std::hash<unsigned long>{}(mpz_get_ui(r.get_den_mpz_t())));
  h = mix(h, static_cast<std::size_t>(mpz_sizeinbase(r.get_num_mpz_t(), 2)));
  return mix(h, static_cast<std::size_t>(sgn(r) + 1));
}

const std::shared_ptr<const Node>& zero_node() {
  static const std::shared_ptr<const Node> node = [] {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = 0;
    n->hash = mix(static_cast<std::size_t>(Op::Const), hash_rational(n->value));
    return n;
  }();
  return node;
}

bool is_integer(const Rational& r) { return r.get_den() == 1; }

}  // namespace

Expr make_node(Op op, const Rational& value, std::string name, int index, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = value;
  n->name = std::move(name);
  n->index = index;
  std::size_t h = static_cast<std::size_t>(op) * 1315423911ULL;
  switch (op) {
    case Op::Const:
      h = mix(h, hash_rational(value));
      break;
    case Op::Param:
      h = mix(h, std::hash<std::string>{}(n->name));
      break;
    case Op::Var:
      h = mix(h, std::hash<int>{}(index));
      break;
    case Op::Pow:
      h = mix(h, hash_rational(value));
      h = mix(h, lhs.hash());
      break;
    default:
      h = mix(h, lhs.hash());
      if (op >= Op::Add) h = mix(h, rhs.hash());
      break;
  }
  n->hash = h;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return Expr(std::move(n));
}

Expr::Expr() = default;

const Node& Expr::n() const noexcept { return node_ ? *node_ : *zero_node(); }

Expr Expr::constant(const Rational& value) {
  if (value == 0) return Expr();
  Rational v = value;
  v.canonicalize();
  return make_node(Op::Const, v, {}, 0, {}, {});
}

Expr Expr::param(std::string name) { return make_node(Op::Param, 0, std::move(name), 0, {}, {}); }

Expr Expr::var(int index) {
  if (index < 0) throw InputError("negative variable index");
  return make_node(Op::Var, 0, {}, index, {}, {});
}

Op Expr::op() const noexcept { return n().op; }
const Rational& Expr::value() const noexcept { return n().value; }
const std::string& Expr::name() const noexcept { return n().name; }
int Expr::index() const noexcept { return n().index; }
const Expr& Expr::lhs() const noexcept { return n().lhs; }
const Expr& Expr::rhs() const noexcept { return n().rhs; }
std::size_t Expr::hash() const noexcept { return n().hash; }

bool Expr::is_const(long v) const { return op() == Op::Const && value() == v; }

bool Expr::is_unary() const noexcept {
  const Op o = op();
  return (o >= Op::Neg && o <= Op::Sqrt) || o == Op::Pow;
}

bool Expr::is_binary() const noexcept {
  const Op o = op();
  return o >= Op::Add && o <= Op::Div;
}

std::size_t Expr::size() const {
  if (is_binary()) return 1 + lhs().size() + rhs().size();
  if (is_unary()) return 1 + lhs().size();
  return 1;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node() == b.node()) return true;
  if (a.hash() != b.hash() || a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::Const:
      return a.value() == b.value();
    case Op::Param:
      return a.name() == b.name();
    case Op::Var:
      return a.index() == b.index();
    case Op::Pow:
      return a.value() == b.value() && a.lhs() == b.lhs();
    default:
      if (a.is_binary()) return a.lhs() == b.lhs() && a.rhs() == b.rhs();
      return a.lhs() == b.lhs();
  }
}

// ---------------------------------------------------------------------------
// Smart constructors

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.value() + b.value());
  if (a.is_const(0)) return b;
  if (b.is_const(0)) return a;
  return make_node(Op::Add, 0, {}, 0, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.value() - b.value());
  if (b.is_const(0)) return a;
  if (a.is_const(0)) return -b;
  return make_node(Op::Sub, 0, {}, 0, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.value() * b.value());
  if (a.is_const(0) || b.is_const(0)) return Expr();
  if (a.is_const(1)) return b;
  if (b.is_const(1)) return a;
  if (a.is_const(-1)) return -b;
  if (b.is_const(-1)) return -a;
  return make_node(Op::Mul, 0, {}, 0, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const() && !b.is_const(0))
    return Expr::constant(a.value() / b.value());
  if (a.is_const(0) && !b.is_const(0)) return Expr();
  if (b.is_const(1)) return a;
  return make_node(Op::Div, 0, {}, 0, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_const()) return Expr::constant(-a.value());
  if (a.op() == Op::Neg) return a.lhs();
  return make_node(Op::Neg, 0, {}, 0, a, {});
}

Expr pow(const Expr& base, const Rational& exponent) {
  if (exponent == 1) return base;
  if (exponent == 0) return Expr::constant(1);
  if (base.is_const() && is_integer(exponent) && !(base.is_const(0) && exponent < 0)) {
    const long k = exponent.get_num().get_si();
    Rational r = 1;
    Rational b = base.value();
    if (k < 0) b = 1 / b;
    for (long i = 0; i < std::labs(k); ++i) r *= b;
    return Expr::constant(r);
  }
  if (base.is_const(1)) return base;
  return make_node(Op::Pow, exponent, {}, 0, base, {});
}

Expr sin(const Expr& a) { return a.is_const(0) ? Expr() : make_node(Op::Sin, 0, {}, 0, a, {}); }
Expr cos(const Expr& a) {
  return a.is_const(0) ? Expr::constant(1) : make_node(Op::Cos, 0, {}, 0, a, {});
}
Expr tan(const Expr& a) { return a.is_const(0) ? Expr() : make_node(Op::Tan, 0, {}, 0, a, {}); }
Expr sec(const Expr& a) {
  return a.is_const(0) ? Expr::constant(1) : make_node(Op::Sec, 0, {}, 0, a, {});
}
Expr exp(const Expr& a) {
  return a.is_const(0) ? Expr::constant(1) : make_node(Op::Exp, 0, {}, 0, a, {});
}
Expr ln(const Expr& a) { return a.is_const(1) ? Expr() : make_node(Op::Ln, 0, {}, 0, a, {}); }
Expr sqrt(const Expr& a) {
  if (a.is_const(0) || a.is_const(1)) return a;
  return make_node(Op::Sqrt, 0, {}, 0, a, {});
}

Expr apply_unary(Op op, const Expr& a) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return sin(a);
    case Op::Cos: return cos(a);
    case Op::Tan: return tan(a);
    case Op::Sec: return sec(a);
    case Op::Exp: return exp(a);
    case Op::Ln: return ln(a);
    case Op::Sqrt: return sqrt(a);
    default: throw std::logic_error("apply_unary: not a unary operator");
  }
}

Expr apply_binary(Op op, const Expr& a, const Expr& b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    default: throw std::logic_error("apply_binary: not a binary operator");
  }
}

Expr sum(std::span<const Expr> terms) {
  Expr acc;
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

// ---------------------------------------------------------------------------
// Queries and rewriting

int variable_count(const Expr& e) {
  switch (e.op()) {
    case Op::Var: return e.index() + 1;
    case Op::Const:
    case Op::Param: return 0;
    default:
      if (e.is_binary()) return std::max(variable_count(e.lhs()), variable_count(e.rhs()));
      return variable_count(e.lhs());
  }
}

bool depends_on(const Expr& e, int index) {
  switch (e.op()) {
    case Op::Var: return e.index() == index;
    case Op::Const:
    case Op::Param: return false;
    default:
      if (e.is_binary()) return depends_on(e.lhs(), index) || depends_on(e.rhs(), index);
      return depends_on(e.lhs(), index);
  }
}

namespace {
void collect_params(const Expr& e, std::set<std::string>& out) {
  switch (e.op()) {
    case Op::Param: out.insert(e.name()); return;
    case Op::Const:
    case Op::Var: return;
    default:
      collect_params(e.lhs(), out);
      if (e.is_binary()) collect_params(e.rhs(), out);
  }
}

template <class Leaf>
Expr rebuild(const Expr& e, const Leaf& leaf) {
  switch (e.op()) {
    case Op::Const: return e;
    case Op::Param:
    case Op::Var: return leaf(e);
    case Op::Pow: return pow(rebuild(e.lhs(), leaf), e.value());
    default:
      if (e.is_binary()) return apply_binary(e.op(), rebuild(e.lhs(), leaf), rebuild(e.rhs(), leaf));
      return apply_unary(e.op(), rebuild(e.lhs(), leaf));
  }
}
}  // namespace

std::set<std::string> parameters(const Expr& e) {
  std::set<std::string> out;
  collect_params(e, out);
  return out;
}

Expr substitute(const Expr& e, std::span<const Expr> replacement) {
  return rebuild(e, [&](const Expr& leaf) {
    if (leaf.op() == Op::Var && leaf.index() < static_cast<int>(replacement.size()))
      return replacement[leaf.index()];
    return leaf;
  });
}

Expr substitute_params(const Expr& e, const std::map<std::string, Expr>& values) {
  return rebuild(e, [&](const Expr& leaf) {
    if (leaf.op() == Op::Param) {
      auto it = values.find(leaf.name());
      if (it != values.end()) return it->second;
    }
    return leaf;
  });
}

// ---------------------------------------------------------------------------
// Differentiation

Expr diff(const Expr& e, int index) {
  switch (e.op()) {
    case Op::Const:
    case Op::Param: return Expr();
    case Op::Var: return Expr::constant(e.index() == index ? 1 : 0);
    default: break;
  }
  const Expr& a = e.lhs();
  const Expr da = diff(a, index);
  switch (e.op()) {
    case Op::Neg: return -da;
    case Op::Add: return da + diff(e.rhs(), index);
    case Op::Sub: return da - diff(e.rhs(), index);
    case Op::Mul: return da * e.rhs() + a * diff(e.rhs(), index);
    case Op::Div: {
      const Expr& b = e.rhs();
      const Expr db = diff(b, index);
      if (db.is_const(0)) return da / b;
      return (da * b - a * db) / pow(b, 2);
    }
    case Op::Pow:
      if (da.is_const(0)) return Expr();
      return Expr::constant(e.value()) * pow(a, e.value() - 1) * da;
    default: break;
  }
  if (da.is_const(0)) return Expr();
  switch (e.op()) {
    case Op::Sin: return cos(a) * da;
    case Op::Cos: return -(sin(a) * da);
    case Op::Tan: return pow(sec(a), 2) * da;
    case Op::Sec: return sec(a) * tan(a) * da;
    case Op::Exp: return exp(a) * da;
    case Op::Ln: return da / a;
    case Op::Sqrt: return da / (Expr::constant(2) * sqrt(a));
    default: throw std::logic_error("diff: unhandled operator");
  }
}

// ---------------------------------------------------------------------------
// Printing

namespace {

constexpr int kPrecSum = 1;
constexpr int kPrecProduct = 2;
constexpr int kPrecUnaryMinus = 3;
constexpr int kPrecPower = 4;
constexpr int kPrecAtom = 5;

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return kPrecSum;
    case Op::Mul:
    case Op::Div: return kPrecProduct;
    case Op::Neg: return kPrecUnaryMinus;
    case Op::Pow: return kPrecPower;
    case Op::Const:
      if (sgn(e.value()) < 0) return kPrecUnaryMinus;
      return is_integer(e.value()) ? kPrecAtom : kPrecProduct;
    default: return kPrecAtom;
  }
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tan: return "tan";
    case Op::Sec: return "sec";
    case Op::Exp: return "exp";
    case Op::Ln: return "ln";
    case Op::Sqrt: return "sqrt";
    default: return "?";
  }
}

std::string rational_text(const Rational& r) {
  if (is_integer(r)) return r.get_num().get_str();
  return r.get_num().get_str() + "/" + r.get_den().get_str();
}

struct Printer {
  std::span<const std::string> names;
  std::ostringstream out;

  void print(const Expr& e, int min_prec) {
    const bool paren = precedence(e) < min_prec;
    if (paren) out << '(';
    emit(e);
    if (paren) out << ')';
  }

  void emit(const Expr& e) {
    switch (e.op()) {
      case Op::Const:
        if (sgn(e.value()) < 0) {
          out << '-';
          print(Expr::constant(-e.value()), kPrecPower);
        } else {
          out << rational_text(e.value());
        }
        return;
      case Op::Param: out << e.name(); return;
      case Op::Var:
        if (e.index() < static_cast<int>(names.size()))
          out << names[e.index()];
        else
          out << 'x' << (e.index() + 1);
        return;
      case Op::Neg:
        out << '-';
        print(e.lhs(), kPrecPower);
        return;
      case Op::Add:
        print(e.lhs(), kPrecSum);
        out << " + ";
        print(e.rhs(), kPrecSum);
        return;
      case Op::Sub:
        print(e.lhs(), kPrecSum);
        out << " - ";
        print(e.rhs(), kPrecProduct);
        return;
      case Op::Mul:
        print(e.lhs(), kPrecProduct);
        out << '*';
        print(e.rhs(), kPrecUnaryMinus);
        return;
      case Op::Div:
        print(e.lhs(), kPrecProduct);
        out << '/';
        print(e.rhs(), kPrecUnaryMinus);
        return;
      case Op::Pow: {
        print(e.lhs(), kPrecAtom);
        const Rational& k = e.value();
        if (is_integer(k) && sgn(k) > 0)
          out << '^' << rational_text(k);
        else
          out << "^(" << rational_text(k) << ')';
        return;
      }
      default:
        out << function_name(e.op()) << '(';
        print(e.lhs(), 0);
        out << ')';
        return;
    }
  }
};

}  // namespace

std::string to_string(const Expr& e, std::span<const std::string> var_names) {
  Printer p{var_names, {}};
  p.print(e, 0);
  return p.out.str();
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<double> Point::state() const {
  std::vector<double> s = x;
  if (v) s.insert(s.end(), v->begin(), v->end());
  return s;
}

double to_double(const Rational& q) {
  constexpr double kExact = 9007199254740992.0;  // 2^53
  if (mpz_sizeinbase(q.get_num_mpz_t(), 2) <= 53 && q.get_den() <= kExact)
    return q.get_num().get_d() / q.get_den().get_d();
  return q.get_d();
}

namespace {

template <class T>
T checked(T value, const char* what) {
  if (!std::isfinite(value)) throw DomainError(std::string("non-finite value in ") + what);
  return value;
}

template <class T>
T eval_node(const Expr& e, std::span<const T> vars, const ParamTable& params) {
  using std::cos, std::sin, std::tan, std::exp, std::log, std::sqrt, std::pow;
  switch (e.op()) {
    case Op::Const:
      if constexpr (std::is_same_v<T, double>) {
        return to_double(e.value());
      } else {
        return static_cast<T>(e.value().get_num().get_d()) / static_cast<T>(e.value().get_den().get_d());
      }
    case Op::Param: {
      auto it = params.find(e.name());
      if (it == params.end()) throw InputError("unbound parameter '" + e.name() + "'");
      return static_cast<T>(it->second);
    }
    case Op::Var:
      if (e.index() >= static_cast<int>(vars.size()))
        throw InputError("variable index " + std::to_string(e.index() + 1) + " out of range");
      return vars[e.index()];
    default: break;
  }
  const T a = eval_node<T>(e.lhs(), vars, params);
  switch (e.op()) {
    case Op::Neg: return -a;
    case Op::Sin: return sin(a);
    case Op::Cos: return cos(a);
    case Op::Tan: return checked<T>(tan(a), "tan");
    case Op::Sec: {
      const T c = cos(a);
      if (c == 0) throw DomainError("sec at a zero of cos");
      return checked<T>(1 / c, "sec");
    }
    case Op::Exp: return checked<T>(exp(a), "exp");
    case Op::Ln:
      if (a <= 0) throw DomainError("ln of a non-positive value");
      return log(a);
    case Op::Sqrt:
      if (a < 0) throw DomainError("sqrt of a negative value");
      return sqrt(a);
    case Op::Pow: {
      const Rational& k = e.value();
      if (is_integer(k)) {
        if (a == 0 && k < 0) throw DomainError("division by zero in power");
        return checked<T>(pow(a, static_cast<T>(k.get_d())), "pow");
      }
      if (a < 0) throw DomainError("fractional power of a negative value");
      return checked<T>(pow(a, static_cast<T>(k.get_d())), "pow");
    }
    default: break;
  }
  const T b = eval_node<T>(e.rhs(), vars, params);
  switch (e.op()) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0) throw DomainError("division by zero");
      return checked<T>(a / b, "division");
    default: throw std::logic_error("eval: unhandled operator");
  }
}

}  // namespace

double eval(const Expr& e, std::span<const double> vars, const ParamTable& params) {
  return checked<double>(eval_node<double>(e, vars, params), "expression");
}

long double eval_extended(const Expr& e, std::span<const long double> vars, const ParamTable& params) {
  return checked<long double>(eval_node<long double>(e, vars, params), "expression");
}

double eval(const Expr& e, const Point& point) {
  const auto s = point.state();
  return eval(e, s, point.params);
}

}  // namespace miold::expr
