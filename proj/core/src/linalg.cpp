#include "miold/expr/linalg.hpp"

#include <algorithm>

#include "miold/expr/simplify.hpp"

namespace miold::expr {

ExprMatrix zero_matrix(std::size_t rows, std::size_t cols) {
  return ExprMatrix(rows, ExprVector(cols));
}

ExprMatrix identity_matrix(std::size_t n) {
  ExprMatrix m = zero_matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = Expr::constant(1);
  return m;
}

namespace {

ExprMatrix minor_of(const ExprMatrix& a, std::size_t row, std::size_t col) {
  ExprMatrix m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i == row) continue;
    ExprVector r;
    for (std::size_t j = 0; j < a.size(); ++j)
      if (j != col) r.push_back(a[i][j]);
    m.push_back(std::move(r));
  }
  return m;
}

}  // namespace

Expr determinant(const ExprMatrix& a) {
  const std::size_t n = a.size();
  if (n == 0) return Expr::constant(1);
  if (n == 1) return simplify(a[0][0]);
  if (n == 2) return simplify(a[0][0] * a[1][1] - a[0][1] * a[1][0]);
  // Expand along the row with the most zero entries.
  std::size_t best = 0, best_zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t z = 0;
    for (const auto& e : a[i]) z += e.is_const(0);
    if (z > best_zeros) best = i, best_zeros = z;
  }
  Expr acc;
  for (std::size_t j = 0; j < n; ++j) {
    if (a[best][j].is_const(0)) continue;
    const Expr term = a[best][j] * determinant(minor_of(a, best, j));
    acc = (best + j) % 2 == 0 ? acc + term : acc - term;
  }
  return simplify(acc);
}

ExprMatrix adjugate(const ExprMatrix& a) {
  const std::size_t n = a.size();
  ExprMatrix adj = zero_matrix(n, n);
  if (n == 1) {
    adj[0][0] = Expr::constant(1);
    return adj;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Expr c = determinant(minor_of(a, i, j));
      adj[j][i] = (i + j) % 2 == 0 ? c : simplify(-c);
    }
  return adj;
}

ExprMatrix inverse(const ExprMatrix& a, const Expr& det) {
  ExprMatrix adj = adjugate(a);
  for (auto& row : adj)
    for (auto& e : row) e = simplify(e / det);
  return adj;
}

ExprMatrix multiply(const ExprMatrix& a, const ExprMatrix& b) {
  const std::size_t rows = a.size(), inner = b.size(), cols = b.empty() ? 0 : b[0].size();
  ExprMatrix c = zero_matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      Expr acc;
      for (std::size_t k = 0; k < inner; ++k) acc = acc + a[i][k] * b[k][j];
      c[i][j] = simplify(acc);
    }
  return c;
}

ExprVector multiply(const ExprMatrix& a, const ExprVector& x) {
  ExprVector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    Expr acc;
    for (std::size_t k = 0; k < x.size(); ++k) acc = acc + a[i][k] * x[k];
    y[i] = simplify(acc);
  }
  return y;
}

ExprMatrix transpose(const ExprMatrix& a) {
  if (a.empty()) return {};
  ExprMatrix t = zero_matrix(a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

ExprVector simplify_all(const ExprVector& v) {
  ExprVector out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(simplify(e));
  return out;
}

ExprMatrix simplify_all(const ExprMatrix& m) {
  ExprMatrix out;
  out.reserve(m.size());
  for (const auto& r : m) out.push_back(simplify_all(r));
  return out;
}

Eigen::MatrixXd evaluate(const ExprMatrix& m, std::span<const double> vars, const ParamTable& params) {
  const auto rows = static_cast<Eigen::Index>(m.size());
  const auto cols = static_cast<Eigen::Index>(m.empty() ? 0 : m[0].size());
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = eval(m[i][j], vars, params);
  return out;
}

Eigen::VectorXd evaluate(const ExprVector& v, std::span<const double> vars, const ParamTable& params) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = eval(v[i], vars, params);
  return out;
}

int numerical_rank(const Eigen::MatrixXd& a, double relative_tol, std::vector<double>* sigma) {
  if (a.size() == 0) {
    if (sigma) sigma->clear();
    return 0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (sigma) sigma->assign(s.data(), s.data() + s.size());
  // The floor of 1 keeps a 1 x 1 matrix that is zero up to rounding from
  // counting as full rank.
  const double scale = std::max(s.size() ? s(0) : 0.0, 1.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > relative_tol * scale) ++rank;
  return rank;
}

}  // namespace miold::expr
