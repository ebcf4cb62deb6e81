#include "miold/synthesis/synthesis.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "miold/errors.hpp"

namespace miold::synthesis {

using expr::simplify;

model::MechanicalTransformation FeedbackLaw::feedback() const {
  model::MechanicalTransformation t;
  t.beta = D_inv;
  t.alpha.assign(m, Expr());
  t.gamma.assign(m, expr::zero_matrix(n, n));
  for (int r = 0; r < m; ++r) {
    Expr a;
    for (int l = 0; l < m; ++l) a = a - D_inv[r][l] * A[l];
    t.alpha[r] = simplify(a);
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        Expr g;
        for (int l = 0; l < m; ++l) {
          const Expr sym = Expr::constant(expr::Rational(1, 2)) * (C[l][j][k] + C[l][k][j]);
          g = g - D_inv[r][l] * sym;
        }
        t.gamma[r][j][k] = t.gamma[r][k][j] = simplify(g);
      }
  }
  return t;
}

model::MechanicalTransformation FeedbackLaw::transformation() const {
  auto t = feedback();
  t.phi = phi;
  return t;
}

namespace {

double sigma_min(const Eigen::MatrixXd& a, double* sigma_max = nullptr) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sigma_max) *sigma_max = sv.size() ? sv(0) : 0.0;
  return sv.size() ? sv(sv.size() - 1) : 0.0;
}

Eigen::MatrixXd jacobian_at(const ExprVector& rows, int n, const expr::Point& point, const expr::ParamTable& params) {
  Eigen::MatrixXd out(rows.size(), n);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (int i = 0; i < n; ++i) {
      try {
        out(a, i) = expr::eval(expr::diff(rows[a], i), point.x, params);
      } catch (const NumericalError& err) {
        throw ConditionError(std::string("Jacobian of phi cannot be evaluated at the point: ") + err.what());
      }
    }
  return out;
}

// Coordinate subset of size k maximizing the smallest singular value.
std::vector<int> best_completion(const Eigen::MatrixXd& chain_rows, int n, int k, double* best_sigma) {
  const int mu = n - k;
  std::vector<char> mask(n, 0);
  std::fill(mask.begin(), mask.begin() + k, 1);
  std::vector<int> best;
  double best_value = -1.0;
  do {
    std::vector<int> pick;
    for (int i = 0; i < n; ++i)
      if (mask[i]) pick.push_back(i);
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
    full.topRows(mu) = chain_rows;
    for (int c = 0; c < k; ++c) full(mu + c, pick[c]) = 1.0;
    const double value = sigma_min(full);
    if (value > best_value * (1.0 + 1e-12)) {
      best_value = value;
      best = pick;
    }
  } while (std::prev_permutation(mask.begin(), mask.end()));
  *best_sigma = best_value;
  return best;
}

void check_equal(const Expr& lhs, const Expr& rhs, const char* what, int index, bool& flag,
                 NormalFormDescription& nf, const expr::ZeroTestOptions& zero) {
  const auto v = expr::is_zero(simplify(lhs - rhs), zero);
  if (!v.zero()) {
    flag = false;
    nf.failures.push_back({what, index});
  } else if (!v.certified()) {
    nf.certified = false;
  }
}

}  // namespace

MechanicalSystem closed_loop_system(const MechanicalSystem& s, const FeedbackLaw& law,
                                    const std::optional<expr::Point>& point) {
  auto out = model::apply_transformation(s, law.transformation(), point);
  out.name = s.name.empty() ? "closed loop" : s.name + " (closed loop)";
  out.h.clear();
  for (int l = 0; l < law.m; ++l) out.h.push_back(law.phi[law.offsets[l]]);
  return out;
}

MechanicalSystem feedback_closed_loop(const MechanicalSystem& s, const FeedbackLaw& law) {
  auto out = model::apply_transformation(s, law.feedback());
  out.name = s.name.empty() ? "feedback loop" : s.name + " (feedback loop)";
  return out;
}

Synthesis synthesize(const MechanicalSystem& s, const geometry::HalfDegreeReport& report,
                     const expr::Point& point, const std::optional<ExprVector>& completion,
                     const geometry::Options& options) {
  if (s.chart) throw InputError("synthesize: the system must be in plain coordinates");
  if (!report.defined()) throw ConditionError("MR1 violated: relative half-degree undefined");
  if (!report.mr1) throw ConditionError("MR1 violated: D is singular at the point");
  if (!report.mr2_holds) throw ConditionError("MR2 violated");
  const int n = s.n, m = s.m;

  Synthesis out;
  FeedbackLaw& law = out.law;
  law.n = n;
  law.m = m;
  law.nu = report.nu_values();
  law.offsets.assign(1, 0);
  for (int l = 0; l < m; ++l) law.offsets.push_back(law.offsets.back() + law.nu[l]);
  const int mu = law.mu();
  if (mu > n) throw ConditionError("sum of half-degrees exceeds n");

  for (int l = 0; l < m; ++l) {
    for (int q = 0; q < law.nu[l]; ++q) law.phi.push_back(report.chains[l][q]);
    law.A.push_back(report.chains[l][law.nu[l]]);
    law.C.push_back(geometry::nabla_d(s, report.chains[l][law.nu[l] - 1]));
  }
  law.D = report.D;
  const Expr det = simplify(expr::determinant(law.D));
  if (expr::proven_zero(det)) throw ConditionError("D is identically singular");
  law.D_inv = expr::simplify_all(expr::inverse(law.D, det));

  const Eigen::MatrixXd chain_rows = jacobian_at(law.phi, n, point, s.params);
  double sigma = 0.0, sigma_max = 0.0;
  if (completion) {
    if (static_cast<int>(completion->size()) != n - mu)
      throw InputError(fmt::format("completion needs {} functions, got {}", n - mu, completion->size()));
    law.user_completion = true;
    for (const auto& c : *completion) law.phi.push_back(simplify(c));
    sigma = sigma_min(jacobian_at(law.phi, n, point, s.params), &sigma_max);
  } else {
    law.completion_indices = best_completion(chain_rows, n, n - mu, &sigma);
    for (int i : law.completion_indices) law.phi.push_back(Expr::var(i));
    sigma = sigma_min(jacobian_at(law.phi, n, point, s.params), &sigma_max);
  }
  law.jacobian_sigma_min = sigma;
  if (!(sigma > 1e-8 * std::max(sigma_max, 1.0)))
    throw ConditionError(fmt::format("Jacobian of phi is singular at the point (smallest singular value {:.3g})", sigma));
  law.jacobian = expr::zero_matrix(n, n);
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < n; ++i) law.jacobian[a][i] = simplify(expr::diff(law.phi[a], i));

  NormalFormDescription& nf = out.normal_form;
  for (int v : law.nu) nf.chain_lengths.push_back(2 * v);
  nf.observable_dim = 2 * mu;
  nf.unobserved_dim = 2 * (n - mu);
  nf.closed_loop = closed_loop_system(s, law, point);
  const MechanicalSystem& cl = nf.closed_loop;

  nf.gamma_vanishes = nf.drift_is_shift = nf.control_pattern = true;
  for (int a = 0; a < mu; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c)
        check_equal(cl.christoffel(a, b, c), Expr(), "Gamma", a, nf.gamma_vanishes, nf, options.zero);
  for (int l = 0; l < m; ++l)
    for (int a = law.offsets[l]; a < law.offsets[l + 1]; ++a) {
      const bool end = a + 1 == law.offsets[l + 1];
      check_equal(cl.e[a], end ? Expr() : law.phi[a + 1], "e", a, nf.drift_is_shift, nf, options.zero);
      for (int r = 0; r < m; ++r)
        check_equal(cl.g[r][a], Expr::constant(end && r == l ? 1 : 0), "g", a, nf.control_pattern, nf,
                    options.zero);
    }
  if (law.user_completion) {
    bool free = true;
    for (int a = mu; a < n && free; ++a)
      for (int r = 0; r < m; ++r)
        if (!expr::is_zero(geometry::lie_derivative(s.g[r], law.phi[a]), options.zero).zero()) {
          free = false;
          break;
        }
    nf.unobserved_control_free = free;
  }
  return out;
}

FlatnessRemark flatness_remark(const FeedbackLaw& law) {
  FlatnessRemark r;
  r.applicable = law.mu() == law.n;
  if (!r.applicable) {
    r.text = "not applicable: sum of half-degrees is less than n";
    return r;
  }
  r.weight = 2 * law.n + law.m;
  r.text = fmt::format(
      "the outputs are flat of differential weight {} (2n + m); configurations depend on even "
      "derivatives of the outputs only",
      r.weight);
  return r;
}

std::string controller_card(const MechanicalSystem& s, const FeedbackLaw& law) {
  const int n = law.n, m = law.m;
  std::vector<std::string> names = s.state_names();
  for (int r = 0; r < m; ++r) names.push_back("w" + std::to_string(r + 1));
  const auto fb = law.feedback();

  std::ostringstream out;
  out << "# controller card" << (s.name.empty() ? "" : ": " + s.name) << "\n";
  out << "# state:";
  for (int i = 0; i < 2 * n; ++i) out << " " << names[i];
  out << "\n# new inputs:";
  for (int r = 0; r < m; ++r) out << " " << names[2 * n + r];
  out << "\n[params]\n";
  for (const auto& [k, v] : s.params) out << k << " = " << fmt::format("{}", v) << "\n";
  out << "[phi]\n";
  for (int a = 0; a < n; ++a) out << "xt" << a + 1 << " = " << expr::to_string(law.phi[a], names) << "\n";
  out << "[feedback]\n";
  for (int r = 0; r < m; ++r) {
    Expr u = fb.alpha[r];
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (!fb.gamma[r][j][k].is_const(0)) u = u + fb.gamma[r][j][k] * Expr::var(n + j) * Expr::var(n + k);
    for (int q = 0; q < m; ++q) u = u + fb.beta[r][q] * Expr::var(2 * n + q);
    out << "u" << r + 1 << " = " << expr::to_string(simplify(u), names) << "\n";
  }
  return out.str();
}

}  // namespace miold::synthesis
