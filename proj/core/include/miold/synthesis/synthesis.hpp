#pragma once

#include <optional>
#include <string>
#include <vector>

#include "miold/geometry/geometry.hpp"

namespace miold::synthesis {

using expr::Expr;
using expr::ExprMatrix;
using expr::ExprVector;
using model::MechanicalSystem;

/// u = D^-1 (-C(x, v) - A(x) + u~) together with x~ = phi(x).
struct FeedbackLaw {
  int n = 0;
  int m = 0;
  std::vector<int> nu;
  /// offsets[l] = nu_1 + ... + nu_l; offsets[m] = mu.
  std::vector<int> offsets;
  ExprVector A;
  ExprMatrix D;
  ExprMatrix D_inv;
  /// C[l] is the symmetric coefficient matrix of v^T C[l] v.
  std::vector<ExprMatrix> C;
  ExprVector phi;
  ExprMatrix jacobian;
  /// Coordinate indices used to complete phi (empty for a user completion).
  std::vector<int> completion_indices;
  bool user_completion = false;
  /// Smallest singular value of the Jacobian at the analysis point.
  double jacobian_sigma_min = 0.0;

  int mu() const { return offsets.empty() ? 0 : offsets.back(); }
  /// Feedback part only: gamma^r = -sum_l (D^-1)^r_l C[l], alpha = -D^-1 A, beta = D^-1.
  model::MechanicalTransformation feedback() const;
  /// Feedback followed by x~ = phi(x).
  model::MechanicalTransformation transformation() const;
};

struct CheckFailure {
  std::string what;
  int index = 0;
};

struct NormalFormDescription {
  std::vector<int> chain_lengths;  // 2 nu_l
  int observable_dim = 0;
  int unobserved_dim = 0;
  /// Closed loop in the coordinates x~ (charted).
  MechanicalSystem closed_loop;
  bool gamma_vanishes = false;
  bool drift_is_shift = false;
  bool control_pattern = false;
  /// Only meaningful for user completions: L_g phi^i = 0 on the unobserved block.
  std::optional<bool> unobserved_control_free;
  /// Every check decided by exact simplification.
  bool certified = true;
  std::vector<CheckFailure> failures;

  bool verified() const { return gamma_vanishes && drift_is_shift && control_pattern; }
};

struct Synthesis {
  FeedbackLaw law;
  NormalFormDescription normal_form;
};

/// Builds phi, A, D, C and the feedback, then verifies the observable block of
/// the closed loop symbolically. Throws ConditionError when MR1/MR2 fail or the
/// Jacobian of phi or D is singular at the point.
Synthesis synthesize(const MechanicalSystem& s, const geometry::HalfDegreeReport& report,
                     const expr::Point& point, const std::optional<ExprVector>& completion = std::nullopt,
                     const geometry::Options& options = {});

/// Feedback then pushforward by phi.
MechanicalSystem closed_loop_system(const MechanicalSystem& s, const FeedbackLaw& law,
                                    const std::optional<expr::Point>& point = std::nullopt);

/// Feedback only; the result stays in the original coordinates.
MechanicalSystem feedback_closed_loop(const MechanicalSystem& s, const FeedbackLaw& law);

struct FlatnessRemark {
  bool applicable = false;
  int weight = 0;
  std::string text;
};

FlatnessRemark flatness_remark(const FeedbackLaw& law);

/// Re-parseable listing: parameter values, phi, and u_r over (x, v, w) where
/// w1..wm are the new inputs.
std::string controller_card(const MechanicalSystem& s, const FeedbackLaw& law);

}  // namespace miold::synthesis
