#pragma once

#include <optional>
#include <string>
#include <vector>

#include "miold/expr/linalg.hpp"
#include "miold/expr/simplify.hpp"

namespace miold::model {

using expr::Expr;
using expr::ExprMatrix;
using expr::ExprVector;
using expr::ParamTable;
using expr::Point;

/// New coordinates x~ = phi(x) on a system whose expressions are still written
/// in the original coordinates x. Derivatives along x~ go through the inverse
/// Jacobian, so phi never has to be inverted.
struct Chart {
  ExprVector phi;
  ExprMatrix jacobian;      // d phi^a / d x^i
  ExprMatrix jacobian_inv;  // d x^i / d x~^a
};

struct LagrangianSpec {
  ExprMatrix M;
  Expr V;
  ExprVector tau0;
  std::vector<ExprVector> tau;
};

/// v' = -v^T Gamma(x) v + e(x) + sum_r g_r(x) u_r,  y = h(x).
/// Expressions use variables 0..n-1 for x; on the tangent bundle n..2n-1 are v.
struct MechanicalSystem {
  std::string name;
  int n = 0;
  int m = 0;
  std::vector<std::string> vars;
  ParamTable params;
  ExprVector gamma;  // n^3 entries, Gamma^i_jk at (i*n + j)*n + k
  ExprVector e;
  std::vector<ExprVector> g;  // g[r][i]
  ExprVector h;
  std::optional<Chart> chart;
  std::optional<LagrangianSpec> lagrangian;

  const Expr& christoffel(int i, int j, int k) const { return gamma[(i * n + j) * n + k]; }
  Expr& christoffel(int i, int j, int k) { return gamma[(i * n + j) * n + k]; }

  /// d E / d x^a in the system's own coordinates (chart aware).
  Expr partial(const Expr& e, int a) const;

  /// Configuration names followed by velocity names (v1.. for x1.., else d<name>).
  std::vector<std::string> state_names() const;

  /// Throws InputError on dimension mismatch, v-dependence, asymmetric Gamma
  /// (zero test on the difference) or m > n.
  void validate(const expr::ZeroTestOptions& zero = {}) const;

  /// Same system with outputs replaced.
  MechanicalSystem with_outputs(ExprVector outputs) const;
};

/// Standard Levi-Civita construction. Throws InputError("degenerate metric")
/// when det M is (numerically) zero, and when M fails Cholesky at `point`.
MechanicalSystem from_lagrangian(const LagrangianSpec& spec, std::vector<std::string> vars,
                                 ParamTable params, ExprVector outputs,
                                 const std::optional<Point>& point = std::nullopt,
                                 const expr::ZeroTestOptions& zero = {});

/// Total energy T + V in (x, v) for Lagrangian-derived systems.
std::optional<Expr> energy(const MechanicalSystem& s);

struct TangentLift {
  ExprVector F;               // 2n
  std::vector<ExprVector> G;  // m x 2n
};

/// F = (v, -v^T Gamma v + e), G_r = (0, g_r).
TangentLift tangent_lift(const MechanicalSystem& s);

/// Acceleration drift -v^T Gamma v + e, expressions in (x, v).
ExprVector drift_acceleration(const MechanicalSystem& s);

/// u_r = v^T gamma^r v + alpha^r + sum_s beta^r_s u~_s, optionally followed by
/// the change of coordinates x~ = phi(x).
struct MechanicalTransformation {
  std::optional<ExprVector> phi;
  std::vector<ExprMatrix> gamma;  // m matrices n x n
  ExprVector alpha;               // m
  ExprMatrix beta;                // m x m, beta[r][s]

  static MechanicalTransformation identity(int n, int m);
};

/// Transformed system. With phi, the result is charted (expressions remain in
/// the original coordinates). Throws ConditionError when beta or the Jacobian
/// of phi is singular at `point`, InputError on dimension mismatch.
MechanicalSystem apply_transformation(const MechanicalSystem& s, const MechanicalTransformation& t,
                                      const std::optional<Point>& point = std::nullopt);

/// Inverse of a feedback-only transformation.
MechanicalTransformation inverse_feedback(const MechanicalTransformation& t);

/// Point on the configuration (and tangent) space from "x=...;v=..." text.
/// Entries may be constant expressions over the system parameters.
Point parse_point(std::string_view text, const MechanicalSystem& s);

/// True iff every expression of the two systems agrees after simplify.
bool structurally_equal(const MechanicalSystem& a, const MechanicalSystem& b);

}  // namespace miold::model
