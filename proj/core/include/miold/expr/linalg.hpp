#pragma once

#include <vector>

#include <Eigen/Dense>

#include "miold/expr/expr.hpp"

namespace miold::expr {

using ExprVector = std::vector<Expr>;
/// Row-major: m[row][col].
using ExprMatrix = std::vector<ExprVector>;

ExprMatrix zero_matrix(std::size_t rows, std::size_t cols);
ExprMatrix identity_matrix(std::size_t n);

/// Laplace expansion with simplification of every minor (n <= 6 intended).
Expr determinant(const ExprMatrix& a);
/// Transposed cofactor matrix, simplified.
ExprMatrix adjugate(const ExprMatrix& a);
/// adj(a) / det(a), entrywise simplified. The caller checks det != 0.
ExprMatrix inverse(const ExprMatrix& a, const Expr& det);

ExprMatrix multiply(const ExprMatrix& a, const ExprMatrix& b);
ExprVector multiply(const ExprMatrix& a, const ExprVector& x);
ExprMatrix transpose(const ExprMatrix& a);

ExprVector simplify_all(const ExprVector& v);
ExprMatrix simplify_all(const ExprMatrix& m);

Eigen::MatrixXd evaluate(const ExprMatrix& m, std::span<const double> vars, const ParamTable& params);
Eigen::VectorXd evaluate(const ExprVector& v, std::span<const double> vars, const ParamTable& params);

/// Numerical rank: singular values above tol * max(sigma_max, 1). Singular values
/// (descending) are written to `sigma` when given.
int numerical_rank(const Eigen::MatrixXd& a, double relative_tol, std::vector<double>* sigma = nullptr);

}  // namespace miold::expr
