#include "miold/geometry/geometry.hpp"

#include <random>
#include <set>

#include "miold/errors.hpp"

namespace miold::geometry {

using expr::simplify;

Expr lie_derivative(const ExprVector& f, const Expr& phi) {
  Expr acc;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].is_const(0)) continue;
    const Expr d = expr::diff(phi, static_cast<int>(i));
    if (d.is_const(0)) continue;
    acc = acc + f[i] * d;
  }
  return simplify(acc);
}

Expr lie_derivative(const MechanicalSystem& s, const ExprVector& f, const Expr& phi) {
  if (!s.chart) return lie_derivative(f, phi);
  Expr acc;
  for (int i = 0; i < s.n; ++i) {
    if (f[i].is_const(0)) continue;
    acc = acc + f[i] * s.partial(phi, i);
  }
  return simplify(acc);
}

ExprVector differential(const MechanicalSystem& s, const Expr& phi) {
  ExprVector d(s.n);
  for (int i = 0; i < s.n; ++i) d[i] = s.partial(phi, i);
  return d;
}

ExprMatrix covariant_derivative_oneform(const MechanicalSystem& s, const ExprVector& omega) {
  const int n = s.n;
  if (static_cast<int>(omega.size()) != n) throw InputError("one-form must have n components");
  ExprMatrix out = expr::zero_matrix(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      Expr acc = s.partial(omega[j], k);
      for (int i = 0; i < n; ++i) {
        const Expr& c = s.christoffel(i, j, k);
        if (c.is_const(0) || omega[i].is_const(0)) continue;
        acc = acc - c * omega[i];
      }
      out[j][k] = simplify(acc);
    }
  return out;
}

ExprMatrix nabla_d(const MechanicalSystem& s, const Expr& phi) {
  const int n = s.n;
  const ExprVector d = differential(s, phi);
  ExprMatrix out = expr::zero_matrix(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = j; k < n; ++k) {
      Expr acc = s.partial(d[j], k);
      for (int i = 0; i < n; ++i) {
        const Expr& c = s.christoffel(i, j, k);
        if (c.is_const(0) || d[i].is_const(0)) continue;
        acc = acc - c * d[i];
      }
      out[j][k] = out[k][j] = simplify(acc);
    }
  return out;
}

bool HalfDegreeReport::defined() const {
  if (nu.empty()) return false;
  for (const auto& v : nu)
    if (!v) return false;
  return true;
}

int HalfDegreeReport::mu() const {
  if (!defined()) return 0;
  int total = 0;
  for (const auto& v : nu) total += *v;
  return total;
}

std::vector<int> HalfDegreeReport::nu_values() const {
  std::vector<int> out;
  for (const auto& v : nu) out.push_back(v.value_or(0));
  return out;
}

bool RelativeDegreeReport::defined() const {
  if (rho.empty()) return false;
  for (const auto& v : rho)
    if (!v) return false;
  return true;
}

namespace {

// Zero-test entries of a candidate row; returns true if all vanish.
bool row_vanishes(ExprVector& row, std::vector<expr::ZeroVerdict>& verdicts, const expr::ZeroTestOptions& zero) {
  verdicts.clear();
  bool all = true;
  for (auto& x : row) {
    verdicts.push_back(expr::is_zero(x, zero));
    if (verdicts.back().zero())
      x = Expr();
    else
      all = false;
  }
  return all;
}

std::vector<int> sample_ranks(const ExprMatrix& D, int n_vars, const expr::ParamTable& params,
                              const Options& options) {
  std::vector<int> ranks;
  std::mt19937_64 rng(options.zero.seed ^ 0x5eedULL);
  std::uniform_int_distribution<int> coord(-2000, 2000);
  std::vector<double> x(n_vars);
  int attempts = 0;
  while (static_cast<int>(ranks.size()) < options.generic_samples && attempts < 10 * options.generic_samples) {
    ++attempts;
    for (auto& xi : x) xi = coord(rng) / 1000.0;
    try {
      ranks.push_back(expr::numerical_rank(expr::evaluate(D, x, params), options.rank_tolerance));
    } catch (const NumericalError&) {
    }
  }
  return ranks;
}

}  // namespace

HalfDegreeReport half_degree(const MechanicalSystem& s, const expr::Point& point, const Options& options) {
  HalfDegreeReport rep;
  rep.n = s.n;
  rep.m = s.m;
  const int cap = 2 * s.n;
  std::vector<expr::ZeroVerdict> verdicts;

  for (int l = 0; l < s.m; ++l) {
    ExprVector chain{simplify(s.h[l])};
    std::optional<int> nu;
    ExprVector row;
    for (int q = 0; q <= cap; ++q) {
      row.clear();
      for (int r = 0; r < s.m; ++r) row.push_back(lie_derivative(s, s.g[r], chain[q]));
      const bool vanish = row_vanishes(row, verdicts, options.zero);
      for (int r = 0; r < s.m; ++r)
        if (verdicts[r].zero()) rep.claims.push_back({l, q, r, verdicts[r]});
      if (!vanish) {
        nu = q + 1;
        break;
      }
      chain.push_back(lie_derivative(s, s.e, chain[q]));
    }
    if (nu) {
      chain.push_back(lie_derivative(s, s.e, chain.back()));
      rep.D.push_back(row);
    } else {
      rep.warnings.push_back("relative half-degree of output " + std::to_string(l + 1) +
                             " undefined: L_g L_e^q h vanishes for all q <= " + std::to_string(cap));
      rep.D.push_back(ExprVector(s.m));
    }
    rep.nu.push_back(nu);
    rep.chains.push_back(std::move(chain));
  }
  for (const auto& c : rep.claims)
    if (!c.verdict.certified()) rep.certified = false;

  if (!rep.defined()) return rep;

  try {
    rep.D_at_point = expr::evaluate(rep.D, point.x, point.params);
  } catch (const NumericalError& err) {
    throw NumericalError(std::string("cannot evaluate D at the analysis point: ") + err.what());
  }
  rep.rank_at_point = expr::numerical_rank(rep.D_at_point, options.rank_tolerance, &rep.singular_values);
  rep.mr1 = rep.rank_at_point == s.m;
  if (!rep.mr1) {
    rep.warnings.push_back("D is rank deficient at the point (smallest singular value " +
                           std::to_string(rep.singular_values.empty() ? 0.0 : rep.singular_values.back()) + ")");
  }

  rep.mr2_holds = true;
  for (int l = 0; l < s.m; ++l) {
    for (int q = 0; q + 2 <= *rep.nu[l]; ++q) {
      Mr2Entry entry;
      entry.output = l;
      entry.q = q;
      entry.residual = nabla_d(s, rep.chains[l][q]);
      entry.holds = true;
      entry.certified = true;
      for (int j = 0; j < s.n && entry.holds; ++j)
        for (int k = j; k < s.n; ++k) {
          const auto v = expr::is_zero(entry.residual[j][k], options.zero);
          if (!v.zero()) {
            entry.holds = false;
            entry.witness_entry = std::make_pair(j, k);
            break;
          }
          if (!v.certified()) entry.certified = false;
        }
      if (!entry.holds) rep.mr2_holds = false;
      if (!entry.certified) rep.certified = false;
      rep.mr2.push_back(std::move(entry));
    }
  }

  rep.generic_ranks = sample_ranks(rep.D, s.n, point.params, options);
  std::set<int> distinct(rep.generic_ranks.begin(), rep.generic_ranks.end());
  if (distinct.size() > 1)
    rep.warnings.push_back("rank of D varies across sample points (non-constant-rank locus)");
  return rep;
}

RelativeDegreeReport full_relative_degree(const MechanicalSystem& s, const expr::Point& point,
                                          const Options& options) {
  if (s.chart) throw InputError("full_relative_degree: charted systems are not supported");
  if (!point.v) throw InputError("full_relative_degree: the point needs velocities");
  const auto lift = model::tangent_lift(s);
  const int cap = 4 * s.n + 1;
  RelativeDegreeReport rep;
  std::vector<expr::ZeroVerdict> verdicts;
  for (int l = 0; l < s.m; ++l) {
    Expr current = simplify(s.h[l]);
    std::optional<int> rho;
    ExprVector row;
    for (int q = 0; q <= cap; ++q) {
      row.clear();
      for (int r = 0; r < s.m; ++r) row.push_back(lie_derivative(lift.G[r], current));
      const bool vanish = row_vanishes(row, verdicts, options.zero);
      for (const auto& v : verdicts)
        if (v.zero() && !v.certified()) rep.certified = false;
      if (!vanish) {
        rho = q + 1;
        break;
      }
      current = lie_derivative(lift.F, current);
    }
    rep.rho.push_back(rho);
    rep.DD.push_back(rho ? row : ExprVector(s.m));
  }
  if (!rep.defined()) return rep;
  const auto state = point.state();
  try {
    rep.DD_at_point = expr::evaluate(rep.DD, state, point.params);
  } catch (const NumericalError& err) {
    throw NumericalError(std::string("cannot evaluate the decoupling matrix at the point: ") + err.what());
  }
  rep.rank_at_point = expr::numerical_rank(rep.DD_at_point, options.rank_tolerance, &rep.singular_values);
  return rep;
}

MfVerdict check_mf_linearizable(const MechanicalSystem& s, const ExprVector& candidates,
                                const expr::Point& point, const Options& options) {
  if (static_cast<int>(candidates.size()) != s.m)
    throw InputError("expected " + std::to_string(s.m) + " candidate outputs");
  for (const auto& c : candidates)
    if (expr::variable_count(c) > s.n) throw InputError("candidate outputs must depend on x only");
  MfVerdict v;
  v.report = half_degree(s.with_outputs(candidates), point, options);
  if (!v.report.defined()) {
    v.reason = "relative half-degree undefined";
  } else if (!v.report.mr1) {
    v.reason = "MR1 violated: D rank deficient at the point";
  } else if (!v.report.mr2_holds) {
    v.reason = "MR2 violated";
  } else if (v.report.mu() != s.n) {
    v.reason = "sum of half-degrees " + std::to_string(v.report.mu()) + " < n = " + std::to_string(s.n);
  } else {
    v.linearizable = true;
    v.reason = "MR1, MR2 hold and sum nu = n";
  }
  return v;
}

}  // namespace miold::geometry
