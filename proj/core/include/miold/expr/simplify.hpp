#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "miold/expr/expr.hpp"

namespace miold::expr {

/// Normal form through the canonical rational-trigonometric representation.
/// Value preserving and idempotent. Expressions that divide by an exact zero
/// are returned unchanged.
Expr simplify(const Expr& e);

/// Drops the memoized simplify results (they are otherwise kept process-wide).
void clear_simplify_cache();

inline constexpr std::uint64_t kDefaultSeed = 20240611;

struct ZeroTestOptions {
  int samples = 32;
  std::uint64_t seed = kDefaultSeed;
  double tolerance = 1e-9;
  int max_retries = 10;
};

struct ZeroVerdict {
  enum class Kind { ProvenZero, NumericallyZero, NonZero };

  Kind kind = Kind::ProvenZero;
  /// Sample count behind a NumericallyZero verdict.
  int samples = 0;
  /// NonZero witness: variable values, parameter values, and the value there.
  std::vector<double> witness_vars;
  ParamTable witness_params;
  double witness_value = 0.0;

  bool zero() const { return kind != Kind::NonZero; }
  bool certified() const { return kind == Kind::ProvenZero; }
};

const char* to_string(ZeroVerdict::Kind kind);

/// Exact test first, then random sampling. Throws UndecidableError when no
/// evaluable sample point is found for some draw.
ZeroVerdict is_zero(const Expr& e, const ZeroTestOptions& options = {});

/// True iff the canonical form is zero (no sampling).
bool proven_zero(const Expr& e);

}  // namespace miold::expr
