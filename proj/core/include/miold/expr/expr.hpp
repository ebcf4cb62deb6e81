#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

namespace miold::expr {

using Rational = mpq_class;

// Nearest double (mpq_class::get_d truncates).
double to_double(const Rational& q);
using ParamTable = std::map<std::string, double>;

enum class Op : std::uint8_t {
  Const,
  Param,
  Var,
  Neg,
  Sin,
  Cos,
  Tan,
  Sec,
  Exp,
  Ln,
  Sqrt,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

struct Node;

/// Immutable symbolic scalar expression over configuration variables
/// (zero-based index) and named parameters. Cheap to copy; shares structure.
class Expr {
 public:
  /// The zero constant.
  Expr();

  static Expr constant(const Rational& value);
  static Expr constant(long value) { return constant(Rational(value)); }
  static Expr param(std::string name);
  static Expr var(int index);

  Op op() const noexcept;
  /// Constant value, or exponent for Op::Pow.
  const Rational& value() const noexcept;
  const std::string& name() const noexcept;
  int index() const noexcept;
  const Expr& lhs() const noexcept;
  const Expr& rhs() const noexcept;
  std::size_t hash() const noexcept;

  bool is_const() const noexcept { return op() == Op::Const; }
  bool is_const(long v) const;
  bool is_unary() const noexcept;
  bool is_binary() const noexcept;

  /// Number of nodes in the tree (shared subtrees counted each time).
  std::size_t size() const;

  /// Identity of the shared node (null for the default zero).
  const Node* node() const noexcept { return node_.get(); }

  friend bool operator==(const Expr& a, const Expr& b);
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  const Node& n() const noexcept;
  friend Expr make_node(Op, const Rational&, std::string, int, Expr, Expr);

  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op;
  Rational value;
  std::string name;
  int index = 0;
  Expr lhs;
  Expr rhs;
  std::size_t hash = 0;
};

// Smart constructors. They fold constants and drop neutral elements but do
// no further rewriting; use simplify() for a normal form.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Rational& exponent);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr tan(const Expr& a);
Expr sec(const Expr& a);
Expr exp(const Expr& a);
Expr ln(const Expr& a);
Expr sqrt(const Expr& a);
Expr apply_unary(Op op, const Expr& a);
Expr apply_binary(Op op, const Expr& a, const Expr& b);

/// Sum of a list (zero if empty).
Expr sum(std::span<const Expr> terms);

/// Largest variable index referenced plus one.
int variable_count(const Expr& e);
bool depends_on(const Expr& e, int index);
std::set<std::string> parameters(const Expr& e);

/// Replace variable nodes; `replacement[i]` substitutes variable i.
Expr substitute(const Expr& e, std::span<const Expr> replacement);
/// Replace parameter nodes by expressions.
Expr substitute_params(const Expr& e, const std::map<std::string, Expr>& values);

/// Partial derivative with respect to variable `index` (tree-level chain rule).
Expr diff(const Expr& e, int index);

/// Printing in the input grammar. Variables without a name print as x<i+1>.
std::string to_string(const Expr& e, std::span<const std::string> var_names = {});

struct ParseOptions {
  /// When set, identifiers that are neither variables, definitions, nor in this
  /// set are rejected.
  const std::set<std::string>* known_params = nullptr;
  /// Named sub-expressions inlined at parse time.
  const std::map<std::string, Expr>* definitions = nullptr;
};

Expr parse(std::string_view text, std::span<const std::string> var_names,
           const ParseOptions& options = {});

/// Evaluation point: configuration, optional velocity, bound parameters.
/// Variables 0..n-1 read x, n..2n-1 read v.
struct Point {
  std::vector<double> x;
  std::optional<std::vector<double>> v;
  ParamTable params;

  std::vector<double> state() const;
};

/// Direct tree evaluation. Throws DomainError outside the domain and
/// InputError for unbound parameters or missing variables.
double eval(const Expr& e, std::span<const double> vars, const ParamTable& params);
double eval(const Expr& e, const Point& point);
/// Same in extended precision (used by the zero test).
long double eval_extended(const Expr& e, std::span<const long double> vars, const ParamTable& params);

}  // namespace miold::expr

template <>
struct std::hash<miold::expr::Expr> {
  std::size_t operator()(const miold::expr::Expr& e) const noexcept { return e.hash(); }
};
