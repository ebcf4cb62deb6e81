#include "miold/errors.hpp"
#include "miold/model/system.hpp"

namespace miold::model {

using expr::simplify;

MechanicalTransformation MechanicalTransformation::identity(int n, int m) {
  MechanicalTransformation t;
  t.gamma.assign(m, expr::zero_matrix(n, n));
  t.alpha.assign(m, Expr());
  t.beta = expr::identity_matrix(m);
  return t;
}

namespace {

void check_rank_at(const ExprMatrix& a, const Point& p, const ParamTable& params, const char* what) {
  const auto state = p.state();
  Eigen::MatrixXd value;
  try {
    value = expr::evaluate(a, state, params);
  } catch (const NumericalError& err) {
    throw ConditionError(std::string(what) + " cannot be evaluated at the point: " + err.what());
  }
  std::vector<double> sigma;
  if (expr::numerical_rank(value, 1e-8, &sigma) < static_cast<int>(a.size()))
    throw ConditionError(std::string(what) + " is singular at the point (smallest singular value " +
                         std::to_string(sigma.empty() ? 0.0 : sigma.back()) + ")");
}

}  // namespace

MechanicalSystem apply_transformation(const MechanicalSystem& s, const MechanicalTransformation& t,
                                      const std::optional<Point>& point) {
  const int n = s.n, m = s.m;
  if (static_cast<int>(t.gamma.size()) != m || static_cast<int>(t.alpha.size()) != m ||
      static_cast<int>(t.beta.size()) != m)
    throw InputError("transformation dimensions do not match the system");
  for (const auto& gm : t.gamma)
    if (static_cast<int>(gm.size()) != n) throw InputError("gamma must be n x n");
  if (point) check_rank_at(t.beta, *point, s.params, "feedback matrix beta");

  MechanicalSystem out = s;
  out.lagrangian.reset();
  out.name = s.name.empty() ? "transformed" : s.name + " (transformed)";

  // Feedback: Gamma - sum g_r gamma^r, e + sum g_r alpha^r, sum_r beta^r_s g_r.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        Expr acc = s.christoffel(i, j, k);
        for (int r = 0; r < m; ++r) {
          const Expr sym =
              Expr::constant(expr::Rational(1, 2)) * (t.gamma[r][j][k] + t.gamma[r][k][j]);
          acc = acc - s.g[r][i] * sym;
        }
        out.christoffel(i, j, k) = out.christoffel(i, k, j) = simplify(acc);
      }
  for (int i = 0; i < n; ++i) {
    Expr acc = s.e[i];
    for (int r = 0; r < m; ++r) acc = acc + s.g[r][i] * t.alpha[r];
    out.e[i] = simplify(acc);
  }
  for (int q = 0; q < m; ++q)
    for (int i = 0; i < n; ++i) {
      Expr acc;
      for (int r = 0; r < m; ++r) acc = acc + t.beta[r][q] * s.g[r][i];
      out.g[q][i] = simplify(acc);
    }
  if (!t.phi) return out;

  // Pushforward by phi.
  if (s.chart) throw InputError("nested coordinate changes are not supported");
  const ExprVector& phi = *t.phi;
  if (static_cast<int>(phi.size()) != n) throw InputError("phi must have n components");
  ExprMatrix J = expr::zero_matrix(n, n);
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < n; ++i) J[a][i] = simplify(expr::diff(phi[a], i));
  if (point) check_rank_at(J, *point, s.params, "Jacobian of phi");
  const Expr det = expr::determinant(J);
  if (expr::proven_zero(det)) throw ConditionError("Jacobian of phi is identically singular");
  const ExprMatrix Jinv = expr::inverse(J, det);

  // T^a_jk = J^a_i Gamma^i_jk - d_j d_k phi^a, then contract with Jinv twice.
  std::vector<ExprMatrix> T(n, expr::zero_matrix(n, n));
  for (int a = 0; a < n; ++a)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        Expr acc = -expr::diff(J[a][j], k);
        for (int i = 0; i < n; ++i)
          if (!J[a][i].is_const(0) && !out.christoffel(i, j, k).is_const(0))
            acc = acc + J[a][i] * out.christoffel(i, j, k);
        T[a][j][k] = T[a][k][j] = simplify(acc);
      }
  MechanicalSystem pushed = out;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c) {
        Expr acc;
        for (int j = 0; j < n; ++j) {
          if (Jinv[j][b].is_const(0)) continue;
          for (int k = 0; k < n; ++k) {
            if (T[a][j][k].is_const(0) || Jinv[k][c].is_const(0)) continue;
            acc = acc + T[a][j][k] * Jinv[j][b] * Jinv[k][c];
          }
        }
        pushed.christoffel(a, b, c) = pushed.christoffel(a, c, b) = simplify(acc);
      }
  pushed.e = expr::multiply(J, out.e);
  for (int q = 0; q < m; ++q) pushed.g[q] = expr::multiply(J, out.g[q]);
  pushed.chart = Chart{phi, J, Jinv};
  return pushed;
}

MechanicalTransformation inverse_feedback(const MechanicalTransformation& t) {
  if (t.phi) throw InputError("inverse_feedback: transformation has a coordinate change");
  const std::size_t m = t.beta.size();
  const Expr det = expr::determinant(t.beta);
  if (expr::proven_zero(det)) throw ConditionError("feedback matrix beta is singular");
  const ExprMatrix binv = expr::inverse(t.beta, det);
  MechanicalTransformation inv;
  inv.beta = binv;
  const std::size_t n = t.gamma.empty() ? 0 : t.gamma[0].size();
  inv.gamma.assign(m, expr::zero_matrix(n, n));
  inv.alpha.assign(m, Expr());
  for (std::size_t s = 0; s < m; ++s) {
    Expr a;
    for (std::size_t r = 0; r < m; ++r) a = a - binv[s][r] * t.alpha[r];
    inv.alpha[s] = simplify(a);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        Expr g;
        for (std::size_t r = 0; r < m; ++r) g = g - binv[s][r] * t.gamma[r][j][k];
        inv.gamma[s][j][k] = simplify(g);
      }
  }
  return inv;
}

}  // namespace miold::model
