#include "miold/expr/program.hpp"

#include <bit>
#include <cmath>
#include <unordered_map>

#include "miold/errors.hpp"

namespace miold::expr {

namespace {

struct InstrKey {
  Op op;
  int a, b;
  std::uint64_t bits;
  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const noexcept {
    std::size_t h = static_cast<std::size_t>(k.op);
    h = h * 1000003u ^ static_cast<std::size_t>(k.a);
    h = h * 1000003u ^ static_cast<std::size_t>(k.b);
    return h * 1000003u ^ std::hash<std::uint64_t>{}(k.bits);
  }
};

}  // namespace

Program::Program(std::span<const Expr> outputs, const ParamTable& params) {
  std::unordered_map<const Node*, int> by_node;
  std::unordered_map<InstrKey, int, InstrKeyHash> by_key;

  auto emit = [&](Instr in) {
    const InstrKey key{in.op, in.a, in.b, std::bit_cast<std::uint64_t>(in.value)};
    if (auto it = by_key.find(key); it != by_key.end()) return it->second;
    code_.push_back(in);
    const int slot = static_cast<int>(code_.size()) - 1;
    by_key.emplace(key, slot);
    return slot;
  };

  auto compile = [&](auto&& self, const Expr& e) -> int {
    if (auto it = by_node.find(e.node()); it != by_node.end()) return it->second;
    int slot;
    switch (e.op()) {
      case Op::Const:
        slot = emit({Op::Const, -1, -1, to_double(e.value())});
        break;
      case Op::Param: {
        auto it = params.find(e.name());
        if (it == params.end()) throw InputError("unbound parameter '" + e.name() + "'");
        slot = emit({Op::Const, -1, -1, it->second});
        break;
      }
      case Op::Var:
        n_vars_ = std::max(n_vars_, e.index() + 1);
        slot = emit({Op::Var, e.index(), -1, 0.0});
        break;
      case Op::Pow: {
        const int a = self(self, e.lhs());
        slot = emit({Op::Pow, a, -1, to_double(e.value()), e.value().get_den() == 1});
        break;
      }
      default:
        if (e.is_binary()) {
          const int a = self(self, e.lhs());
          const int b = self(self, e.rhs());
          slot = emit({e.op(), a, b, 0.0});
        } else {
          const int a = self(self, e.lhs());
          slot = emit({e.op(), a, -1, 0.0});
        }
    }
    by_node.emplace(e.node(), slot);
    return slot;
  };

  for (const auto& e : outputs) outputs_.push_back(compile(compile, e));
}

void Program::run(std::span<const double> vars, std::span<double> out,
                  std::vector<double>& r) const {
  if (static_cast<int>(vars.size()) < n_vars_) throw InputError("program: too few variables");
  r.resize(code_.size());
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& in = code_[i];
    const double a = in.a >= 0 && in.op != Op::Var ? r[in.a] : 0.0;
    double v;
    switch (in.op) {
      case Op::Const: v = in.value; break;
      case Op::Var: v = vars[in.a]; break;
      case Op::Param: v = in.value; break;
      case Op::Neg: v = -a; break;
      case Op::Sin: v = std::sin(a); break;
      case Op::Cos: v = std::cos(a); break;
      case Op::Tan: v = std::tan(a); break;
      case Op::Sec: {
        const double c = std::cos(a);
        if (c == 0.0) throw DomainError("sec at a zero of cos");
        v = 1.0 / c;
        break;
      }
      case Op::Exp: v = std::exp(a); break;
      case Op::Ln:
        if (a <= 0.0) throw DomainError("ln of a non-positive value");
        v = std::log(a);
        break;
      case Op::Sqrt:
        if (a < 0.0) throw DomainError("sqrt of a negative value");
        v = std::sqrt(a);
        break;
      case Op::Pow:
        if (in.integer_power) {
          if (a == 0.0 && in.value < 0) throw DomainError("division by zero in power");
          if (in.value == 2.0)
            v = a * a;
          else
            v = std::pow(a, in.value);
        } else {
          if (a < 0.0) throw DomainError("fractional power of a negative value");
          v = std::pow(a, in.value);
        }
        break;
      case Op::Add: v = a + r[in.b]; break;
      case Op::Sub: v = a - r[in.b]; break;
      case Op::Mul: v = a * r[in.b]; break;
      case Op::Div:
        if (r[in.b] == 0.0) throw DomainError("division by zero");
        v = a / r[in.b];
        break;
      default: v = 0.0;
    }
    r[i] = v;
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) {
    const double v = r[outputs_[k]];
    if (!std::isfinite(v)) throw DomainError("non-finite value");
    out[k] = v;
  }
}

std::vector<double> Program::operator()(std::span<const double> vars) const {
  std::vector<double> out(outputs_.size());
  std::vector<double> scratch;
  run(vars, out, scratch);
  return out;
}

}  // namespace miold::expr
