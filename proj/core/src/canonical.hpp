// Canonical rational-function form used by simplify() and the exact zero test.
//
// An expression maps to coeff * mono * prod(poly_i ^ k_i) over the ring
// Q[params^±, x, sin, cos^±, exp^±, ...] / (sin^2 + cos^2 - 1). Trig and exp
// of sums are expanded, so sin(x1 - x2) and 2*sin(x)*cos(x) meet the same
// representation. A form is zero iff its coefficient is zero.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "miold/expr/expr.hpp"

namespace miold::expr::canon {

enum class AtomKind : std::uint8_t { Param, Var, Sin, Cos, Exp, Ln, Pow };

struct Atom {
  AtomKind kind;
  int index = 0;
  std::string name;
  Expr arg;
  std::string key;
  Rational exponent;

  // Laurent atoms may carry negative exponents inside monomials.
  bool laurent() const {
    return kind == AtomKind::Param || kind == AtomKind::Cos || kind == AtomKind::Exp ||
           kind == AtomKind::Pow;
  }
};

using AtomRef = const Atom*;

/// Sorted by atom order, nonzero exponents.
using Monomial = std::vector<std::pair<AtomRef, int>>;

int compare_atoms(AtomRef a, AtomRef b);
int compare_monomials(const Monomial& a, const Monomial& b);

struct MonoGreater {
  bool operator()(const Monomial& a, const Monomial& b) const { return compare_monomials(a, b) > 0; }
};

using Poly = std::map<Monomial, Rational, MonoGreater>;
using PolyRef = std::shared_ptr<const Poly>;

struct Form {
  Rational coeff;
  Monomial mono;
  std::vector<std::pair<PolyRef, int>> factors;

  bool zero() const { return coeff == 0; }
};

Form to_form(const Expr& e);
Expr to_expr(const Form& f);

}  // namespace miold::expr::canon
