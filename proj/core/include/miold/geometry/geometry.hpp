#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "miold/model/system.hpp"

namespace miold::geometry {

using expr::Expr;
using expr::ExprMatrix;
using expr::ExprVector;
using model::MechanicalSystem;

struct Options {
  expr::ZeroTestOptions zero;
  /// Relative singular-value threshold for rank decisions at a point.
  double rank_tolerance = 1e-8;
  /// Extra random points for the generic-rank check of D.
  int generic_samples = 16;
};

/// L_f phi = sum_i f^i d phi / d x^i (simplified), plain coordinates.
Expr lie_derivative(const ExprVector& f, const Expr& phi);
/// Chart-aware version using s.partial.
Expr lie_derivative(const MechanicalSystem& s, const ExprVector& f, const Expr& phi);

/// (j,k) entry: d omega_j / d x^k - Gamma^i_jk omega_i.
ExprMatrix covariant_derivative_oneform(const MechanicalSystem& s, const ExprVector& omega);

/// Covariant Hessian: d^2 phi / dx^j dx^k - Gamma^i_jk d phi / dx^i.
ExprMatrix nabla_d(const MechanicalSystem& s, const Expr& phi);

/// Differential of phi as a one-form.
ExprVector differential(const MechanicalSystem& s, const Expr& phi);

struct ZeroClaim {
  int output = 0;  // l (0-based)
  int q = 0;
  int input = 0;   // r (0-based)
  expr::ZeroVerdict verdict;
};

struct Mr2Entry {
  int output = 0;
  int q = 0;
  ExprMatrix residual;
  bool holds = false;
  bool certified = false;
  /// First nonzero entry (j,k) when the condition fails.
  std::optional<std::pair<int, int>> witness_entry;
};

struct HalfDegreeReport {
  int n = 0;
  int m = 0;
  std::vector<std::optional<int>> nu;
  /// chains[l][q] = L_e^q h_l for q = 0..nu_l (the last entry is A_l).
  std::vector<ExprVector> chains;
  ExprMatrix D;  // D[l][r] = L_{g_r} L_e^{nu_l - 1} h_l
  Eigen::MatrixXd D_at_point;
  std::vector<double> singular_values;
  int rank_at_point = 0;
  bool mr1 = false;
  std::vector<Mr2Entry> mr2;
  bool mr2_holds = false;
  bool certified = true;
  std::vector<ZeroClaim> claims;
  std::vector<int> generic_ranks;
  std::vector<std::string> warnings;

  bool defined() const;
  bool solvable() const { return defined() && mr1 && mr2_holds; }
  /// mu = sum nu_l (0 when undefined).
  int mu() const;
  std::vector<int> nu_values() const;
};

/// Definition of the vector relative half-degree with MR1/MR2 verdicts.
/// Undefined components are reported, not thrown. Throws NumericalError when D
/// cannot be evaluated at the point.
HalfDegreeReport half_degree(const MechanicalSystem& s, const expr::Point& point, const Options& options = {});

struct RelativeDegreeReport {
  std::vector<std::optional<int>> rho;
  ExprMatrix DD;  // in (x, v)
  Eigen::MatrixXd DD_at_point;
  std::vector<double> singular_values;
  int rank_at_point = 0;
  bool certified = true;

  bool defined() const;
};

/// Classical relative degree of the tangent lift (cap 4n+2). Needs point.v.
RelativeDegreeReport full_relative_degree(const MechanicalSystem& s, const expr::Point& point,
                                          const Options& options = {});

struct MfVerdict {
  HalfDegreeReport report;
  bool linearizable = false;
  std::string reason;
};

/// Candidate outputs fully MF-linearize iff MR1, MR2 hold and sum nu = n.
MfVerdict check_mf_linearizable(const MechanicalSystem& s, const ExprVector& candidates,
                                const expr::Point& point, const Options& options = {});

}  // namespace miold::geometry
