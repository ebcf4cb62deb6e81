#include <Eigen/Cholesky>

#include "miold/errors.hpp"
#include "miold/model/system.hpp"

namespace miold::model {

using expr::simplify;

MechanicalSystem from_lagrangian(const LagrangianSpec& spec, std::vector<std::string> vars,
                                 ParamTable params, ExprVector outputs,
                                 const std::optional<Point>& point, const expr::ZeroTestOptions& zero) {
  const int n = static_cast<int>(spec.M.size());
  if (n == 0) throw InputError("empty inertia matrix");
  for (const auto& row : spec.M)
    if (static_cast<int>(row.size()) != n) throw InputError("inertia matrix must be square");
  if (static_cast<int>(spec.tau0.size()) != n) throw InputError("tau0 must have n entries");
  for (const auto& t : spec.tau)
    if (static_cast<int>(t.size()) != n) throw InputError("tau fields must have n entries");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!expr::is_zero(spec.M[i][j] - spec.M[j][i], zero).zero())
        throw InputError("inertia matrix is not symmetric at (" + std::to_string(i + 1) + "," +
                         std::to_string(j + 1) + ")");

  const Expr det = expr::determinant(spec.M);
  if (expr::is_zero(det, zero).zero()) throw InputError("degenerate metric: det M vanishes");

  if (point) {
    const Eigen::MatrixXd m = expr::evaluate(spec.M, point->x, params);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
      throw InputError("inertia matrix is not positive definite at the analysis point");
  }

  const ExprMatrix inv = expr::inverse(spec.M, det);

  MechanicalSystem s;
  s.n = n;
  s.m = static_cast<int>(spec.tau.size());
  s.vars = std::move(vars);
  s.params = std::move(params);
  s.gamma.assign(static_cast<std::size_t>(n * n * n), Expr());

  // Christoffel symbols of the first kind: c[l][j][k].
  std::vector<ExprMatrix> first(n, expr::zero_matrix(n, n));
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        const Expr c = expr::diff(spec.M[l][k], j) + expr::diff(spec.M[l][j], k) -
                       expr::diff(spec.M[j][k], l);
        first[l][j][k] = first[l][k][j] = simplify(Expr::constant(expr::Rational(1, 2)) * c);
      }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        Expr acc;
        for (int l = 0; l < n; ++l)
          if (!first[l][j][k].is_const(0)) acc = acc + inv[i][l] * first[l][j][k];
        s.christoffel(i, j, k) = s.christoffel(i, k, j) = simplify(acc);
      }

  ExprVector force(n);
  for (int i = 0; i < n; ++i) force[i] = simplify(spec.tau0[i] - expr::diff(spec.V, i));
  s.e = expr::multiply(inv, force);
  for (const auto& t : spec.tau) s.g.push_back(expr::multiply(inv, t));
  s.h = std::move(outputs);
  s.lagrangian = spec;
  return s;
}

}  // namespace miold::model
