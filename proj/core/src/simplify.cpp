#include "miold/expr/simplify.hpp"

#include <cmath>
#include <mutex>
#include <random>
#include <unordered_map>

#include "canonical.hpp"
#include "miold/errors.hpp"

namespace miold::expr {

namespace {

struct ExprEq {
  bool operator()(const Expr& a, const Expr& b) const { return a == b; }
};

// Shared results; Lie-derivative chains simplify the same subterms repeatedly.
class SimplifyCache {
 public:
  std::optional<Expr> find(const Expr& e) {
    std::lock_guard lock(mutex_);
    auto it = map_.find(e);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void store(const Expr& e, const Expr& s) {
    std::lock_guard lock(mutex_);
    if (map_.size() > 200000) map_.clear();
    map_.emplace(e, s);
  }
  void clear() {
    std::lock_guard lock(mutex_);
    map_.clear();
  }

 private:
  std::mutex mutex_;
  std::unordered_map<Expr, Expr, std::hash<Expr>, ExprEq> map_;
};

SimplifyCache& cache() {
  static SimplifyCache c;
  return c;
}

}  // namespace

void clear_simplify_cache() { cache().clear(); }

Expr simplify(const Expr& e) {
  if (e.is_const() || e.op() == Op::Var || e.op() == Op::Param) return e;
  if (auto hit = cache().find(e)) return *hit;
  Expr out;
  try {
    out = canon::to_expr(canon::to_form(e));
  } catch (const DomainError&) {
    out = e;
  }
  cache().store(e, out);
  return out;
}

bool proven_zero(const Expr& e) {
  if (e.is_const()) return e.is_const(0);
  try {
    return canon::to_form(e).zero();
  } catch (const DomainError&) {
    return false;
  }
}

const char* to_string(ZeroVerdict::Kind kind) {
  switch (kind) {
    case ZeroVerdict::Kind::ProvenZero: return "ProvenZero";
    case ZeroVerdict::Kind::NumericallyZero: return "NumericallyZero";
    case ZeroVerdict::Kind::NonZero: return "NonZero";
  }
  return "?";
}

ZeroVerdict is_zero(const Expr& e, const ZeroTestOptions& options) {
  ZeroVerdict verdict;
  const Expr s = simplify(e);
  if (s.is_const(0)) return verdict;
  if (s.is_const()) {
    verdict.kind = ZeroVerdict::Kind::NonZero;
    verdict.witness_value = s.value().get_d();
    return verdict;
  }

  const int n = variable_count(s);
  const auto names = parameters(s);
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> coord(-2000, 2000);
  std::uniform_real_distribution<double> param(0.1, 10.0);

  std::vector<double> vars(n);
  std::vector<long double> vars_ext(n);
  ParamTable params;
  for (int k = 0; k < options.samples; ++k) {
    bool evaluated = false;
    long double value = 0;
    for (int attempt = 0; attempt <= options.max_retries && !evaluated; ++attempt) {
      for (int i = 0; i < n; ++i) {
        vars[i] = coord(rng) / 1000.0;
        vars_ext[i] = vars[i];
      }
      for (const auto& p : names) params[p] = param(rng);
      try {
        value = eval_extended(s, vars_ext, params);
        evaluated = true;
      } catch (const DomainError&) {
      }
    }
    if (!evaluated)
      throw UndecidableError("zero test undecidable: no evaluable sample point for '" +
                             to_string(e) + "'");
    if (std::fabs(value) >= options.tolerance) {
      verdict.kind = ZeroVerdict::Kind::NonZero;
      verdict.witness_vars = vars;
      verdict.witness_params = params;
      verdict.witness_value = static_cast<double>(value);
      return verdict;
    }
  }
  verdict.kind = ZeroVerdict::Kind::NumericallyZero;
  verdict.samples = options.samples;
  return verdict;
}

}  // namespace miold::expr
