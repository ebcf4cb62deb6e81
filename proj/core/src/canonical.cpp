#include "canonical.hpp"

#include <algorithm>
#include <mutex>
#include <optional>
#include <tuple>
#include <unordered_map>

#include "miold/errors.hpp"

namespace miold::expr::canon {

namespace {

// ---------------------------------------------------------------------------
// Atom registry

struct AtomKey {
  AtomKind kind;
  int index;
  std::string text;
  std::string exponent;
  bool operator<(const AtomKey& o) const {
    return std::tie(kind, index, text, exponent) < std::tie(o.kind, o.index, o.text, o.exponent);
  }
};

std::mutex registry_mutex;
std::map<AtomKey, std::unique_ptr<Atom>>& registry() {
  static std::map<AtomKey, std::unique_ptr<Atom>> r;
  return r;
}

// Internal printing of atom arguments: variables as #i so that a parameter
// called "x2" can never collide with variable 2.
std::string key_of(const Expr& arg) {
  const int n = variable_count(arg);
  std::vector<std::string> names;
  names.reserve(n);
  for (int i = 0; i < n; ++i) names.push_back("#" + std::to_string(i));
  return to_string(arg, names);
}

AtomRef intern(AtomKind kind, int index, const std::string& name, const Expr& arg,
               const Rational& exponent) {
  AtomKey key{kind, index, name, exponent.get_str()};
  std::string arg_key;
  if (kind != AtomKind::Var && kind != AtomKind::Param) {
    arg_key = key_of(arg);
    key.text = arg_key;
  }
  std::lock_guard lock(registry_mutex);
  auto& slot = registry()[key];
  if (!slot) {
    slot = std::make_unique<Atom>();
    slot->kind = kind;
    slot->index = index;
    slot->name = name;
    slot->arg = arg;
    slot->key = std::move(arg_key);
    slot->exponent = exponent;
  }
  return slot.get();
}

AtomRef var_atom(int i) { return intern(AtomKind::Var, i, {}, {}, 0); }
AtomRef param_atom(const std::string& name) { return intern(AtomKind::Param, 0, name, {}, 0); }
AtomRef fn_atom(AtomKind kind, const Expr& arg, const Rational& exponent = 0) {
  return intern(kind, 0, {}, arg, exponent);
}

AtomRef cos_partner(AtomRef sin_atom) { return fn_atom(AtomKind::Cos, sin_atom->arg); }

}  // namespace

int compare_atoms(AtomRef a, AtomRef b) {
  if (a == b) return 0;
  if (a->kind != b->kind) return a->kind < b->kind ? -1 : 1;
  switch (a->kind) {
    case AtomKind::Var: return a->index < b->index ? -1 : 1;
    case AtomKind::Param: return a->name.compare(b->name) < 0 ? -1 : 1;
    default: {
      if (a->key.size() != b->key.size()) return a->key.size() < b->key.size() ? -1 : 1;
      const int c = a->key.compare(b->key);
      if (c != 0) return c < 0 ? -1 : 1;
      return cmp(a->exponent, b->exponent) < 0 ? -1 : 1;
    }
  }
}

// Lexicographic: the first atom (in atom order) is the most significant.
int compare_monomials(const Monomial& a, const Monomial& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    int c;
    if (i == a.size())
      c = 1;
    else if (j == b.size())
      c = -1;
    else
      c = compare_atoms(a[i].first, b[j].first);
    if (c == 0) {
      if (a[i].second != b[j].second) return a[i].second > b[j].second ? 1 : -1;
      ++i;
      ++j;
    } else if (c < 0) {
      // atom present in a only (b has exponent 0)
      return a[i].second > 0 ? 1 : -1;
    } else {
      return b[j].second > 0 ? -1 : 1;
    }
  }
  return 0;
}

namespace {

// ---------------------------------------------------------------------------
// Monomials and polynomials

Monomial mono_mul(const Monomial& a, const Monomial& b) {
  Monomial out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    int c = i == a.size() ? 1 : j == b.size() ? -1 : compare_atoms(a[i].first, b[j].first);
    if (c < 0) {
      out.push_back(a[i++]);
    } else if (c > 0) {
      out.push_back(b[j++]);
    } else {
      const int e = a[i].second + b[j].second;
      if (e != 0) out.emplace_back(a[i].first, e);
      ++i;
      ++j;
    }
  }
  return out;
}

Monomial mono_pow(const Monomial& a, int k) {
  if (k == 0) return {};
  Monomial out = a;
  for (auto& [atom, e] : out) e *= k;
  return out;
}

Monomial mono_inverse(const Monomial& a) { return mono_pow(a, -1); }

void add_term(Poly& p, const Monomial& m, const Rational& c) {
  if (c == 0) return;
  auto [it, inserted] = p.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) p.erase(it);
  }
}

Rational binomial(int n, int k) {
  mpz_class r;
  mpz_bin_uiui(r.get_mpz_t(), static_cast<unsigned long>(n), static_cast<unsigned long>(k));
  return Rational(r);
}

// Adds c*m to p, rewriting sin^k with k >= 2 through sin^2 = 1 - cos^2.
void reduce_add(Poly& p, Monomial m, const Rational& c) {
  if (c == 0) return;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto [atom, e] = m[i];
    if (atom->kind != AtomKind::Sin || e < 2) continue;
    const int half = e / 2;
    if (e % 2 == 0)
      m.erase(m.begin() + static_cast<long>(i));
    else
      m[i].second = 1;
    const AtomRef cs = cos_partner(atom);
    for (int j = 0; j <= half; ++j) {
      Rational coef = c * binomial(half, j);
      if (j % 2 == 1) coef = -coef;
      reduce_add(p, j == 0 ? m : mono_mul(m, Monomial{{cs, 2 * j}}), coef);
    }
    return;
  }
  add_term(p, m, c);
}

bool needs_reduction(const Monomial& m) {
  for (const auto& [atom, e] : m)
    if (atom->kind == AtomKind::Sin && e >= 2) return true;
  return false;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) {
      Monomial m = mono_mul(ma, mb);
      if (needs_reduction(m))
        reduce_add(out, std::move(m), ca * cb);
      else
        add_term(out, m, ca * cb);
    }
  return out;
}

Poly poly_const(const Rational& c) {
  Poly p;
  add_term(p, {}, c);
  return p;
}

Poly poly_pow(const Poly& base, int k) {
  Poly result = poly_const(1);
  Poly b = base;
  while (k > 0) {
    if (k & 1) result = poly_mul(result, b);
    k >>= 1;
    if (k) b = poly_mul(b, b);
  }
  return result;
}

int compare_polys(const Poly& a, const Poly& b) {
  if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    const int c = compare_monomials(ia->first, ib->first);
    if (c != 0) return c;
    const int d = cmp(ia->second, ib->second);
    if (d != 0) return d < 0 ? -1 : 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Forms

Form zero_form() { return Form{0, {}, {}}; }
Form const_form(const Rational& c) { return Form{c, {}, {}}; }

PolyRef single_atom_poly(AtomRef a) {
  auto p = std::make_shared<Poly>();
  (*p)[Monomial{{a, 1}}] = 1;
  return p;
}

Form atom_form(AtomRef a) {
  if (a->laurent()) return Form{1, Monomial{{a, 1}}, {}};
  return Form{1, {}, {{single_atom_poly(a), 1}}};
}

void sort_factors(std::vector<std::pair<PolyRef, int>>& fs) {
  std::sort(fs.begin(), fs.end(),
            [](const auto& a, const auto& b) { return compare_polys(*a.first, *b.first) < 0; });
}

// Polynomial -> form: pull out monomial content, make monic.
Form normalize_poly(const Poly& p) {
  if (p.empty()) return zero_form();
  std::map<AtomRef, int, bool (*)(AtomRef, AtomRef)> minimum(
      [](AtomRef a, AtomRef b) { return compare_atoms(a, b) < 0; });
  bool first = true;
  for (const auto& [m, c] : p) {
    if (first) {
      for (const auto& [a, e] : m) minimum[a] = e;
      first = false;
      continue;
    }
    // atoms absent from m have exponent 0
    for (auto& [a, e] : minimum) {
      int here = 0;
      for (const auto& [b, f] : m)
        if (b == a) {
          here = f;
          break;
        }
      e = std::min(e, here);
    }
    for (const auto& [a, e] : m)
      if (e < 0 && !minimum.contains(a)) minimum[a] = e;
  }
  Monomial content;
  for (const auto& [a, e] : minimum)
    if (e != 0) content.emplace_back(a, e);

  Poly rest;
  const Monomial inverse = mono_inverse(content);
  auto hint = rest.end();
  for (const auto& [m, c] : p) hint = rest.emplace_hint(hint, mono_mul(m, inverse), c);

  const Rational lead = rest.begin()->second;
  Form f;
  f.coeff = lead;
  for (const auto& [a, e] : content) {
    if (a->laurent())
      f.mono.emplace_back(a, e);
    else
      f.factors.emplace_back(single_atom_poly(a), e);
  }
  if (!(rest.size() == 1 && rest.begin()->first.empty())) {
    auto monic = std::make_shared<Poly>();
    auto h = monic->end();
    for (const auto& [m, c] : rest) h = monic->emplace_hint(h, m, c / lead);
    f.factors.emplace_back(std::move(monic), 1);
  }
  sort_factors(f.factors);
  return f;
}

Poly expand(const Form& f) {
  Poly p;
  p[f.mono] = f.coeff;
  for (const auto& [poly, k] : f.factors) {
    if (k < 0) throw std::logic_error("expand: negative factor exponent");
    p = poly_mul(p, poly_pow(*poly, k));
  }
  return p;
}

std::vector<std::pair<PolyRef, int>> merge_factors(const std::vector<std::pair<PolyRef, int>>& a,
                                                   const std::vector<std::pair<PolyRef, int>>& b,
                                                   int sign_b = 1) {
  std::vector<std::pair<PolyRef, int>> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    int c = i == a.size()   ? 1
            : j == b.size() ? -1
                            : compare_polys(*a[i].first, *b[j].first);
    if (c < 0) {
      out.push_back(a[i++]);
    } else if (c > 0) {
      out.emplace_back(b[j].first, sign_b * b[j].second);
      ++j;
    } else {
      const int e = a[i].second + sign_b * b[j].second;
      if (e != 0) out.emplace_back(a[i].first, e);
      ++i;
      ++j;
    }
  }
  return out;
}

Form mul_raw(const Form& a, const Form& b) {
  if (a.zero() || b.zero()) return zero_form();
  Form f;
  f.coeff = a.coeff * b.coeff;
  f.mono = mono_mul(a.mono, b.mono);
  f.factors = merge_factors(a.factors, b.factors);
  return f;
}

Form pow_int(const Form& a, long k);

// Exact division in the free polynomial ring (no trig relation); nullopt when
// it does not divide or the work bound is hit.
std::optional<Poly> divide_exact(const Poly& a, const Poly& b) {
  if (b.empty() || a.size() < b.size()) return std::nullopt;
  const auto& [lead_m, lead_c] = *b.begin();
  Poly r = a;
  Poly q;
  for (int guard = 0; !r.empty(); ++guard) {
    if (guard > 4000) return std::nullopt;
    const auto [m, c] = *r.begin();
    Monomial t = mono_mul(m, mono_inverse(lead_m));
    for (const auto& [atom, e] : t)
      if (e < 0 && !atom->laurent()) return std::nullopt;
    for (const auto& [atom, e] : t)
      if (e < 0) return std::nullopt;
    const Rational tc = c / lead_c;
    add_term(q, t, tc);
    for (const auto& [mb, cb] : b) add_term(r, mono_mul(t, mb), -tc * cb);
  }
  Poly reduced;
  for (const auto& [m, c] : q) reduce_add(reduced, m, c);
  return reduced;
}

constexpr std::size_t kTidyTermLimit = 400;

// Cancel factors that divide each other exactly.
Form tidy(Form f) {
  for (int round = 0; round < 16; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < f.factors.size() && !changed; ++i) {
      for (std::size_t j = 0; j < f.factors.size() && !changed; ++j) {
        const auto& [pa, ka] = f.factors[i];
        const auto& [pb, kb] = f.factors[j];
        if (ka <= 0 || kb >= 0) continue;
        if (pa->size() > kTidyTermLimit || pb->size() > kTidyTermLimit) continue;
        if (pa->size() == 1) continue;
        const bool sin_atom = pb->size() == 1 && pb->begin()->first.size() == 1 &&
                              pb->begin()->first[0].first->kind == AtomKind::Sin;
        if (pb->size() == 1 && !sin_atom) continue;
        const PolyRef A = pa, B = pb;
        const int a_exp = ka, b_exp = -kb;
        std::optional<Poly> q;
        bool a_over_b = false;
        if (sin_atom) {
          // handled by the power branch below
        } else if (A->size() >= B->size() && (q = divide_exact(*A, *B))) {
          a_over_b = true;
        } else if (B->size() > A->size() && (q = divide_exact(*B, *A))) {
          a_over_b = false;
        }
        if (!q) {
          // A may be a reduced power of B: A = Q B^j modulo sin^2 + cos^2 = 1.
          int j_hit = 0;
          for (int j = std::min(std::max(b_exp, 2), 4); j >= 2 && !j_hit; --j) {
            const Poly bj = poly_pow(*B, j);
            if (bj.size() > A->size()) continue;
            if ((q = divide_exact(*A, bj))) j_hit = j;
          }
          if (!j_hit || a_exp != 1) continue;
          Form rest{f.coeff, f.mono, {}};
          for (std::size_t k = 0; k < f.factors.size(); ++k)
            if (k != i && k != j) rest.factors.push_back(f.factors[k]);
          rest = mul_raw(rest, normalize_poly(*q));
          if (j_hit != b_exp) rest = mul_raw(rest, Form{1, {}, {{B, j_hit - b_exp}}});
          f = std::move(rest);
          changed = true;
          continue;
        }
        Form rest{f.coeff, f.mono, {}};
        for (std::size_t k = 0; k < f.factors.size(); ++k)
          if (k != i && k != j) rest.factors.push_back(f.factors[k]);
        const Form qf = normalize_poly(*q);
        if (a_over_b) {
          // A^a B^-b = Q^a B^(a-b)
          rest = mul_raw(rest, pow_int(qf, a_exp));
          if (a_exp != b_exp) rest = mul_raw(rest, Form{1, {}, {{B, a_exp - b_exp}}});
        } else {
          // B = Q A: A^a B^-b = A^(a-b) Q^-b
          rest = mul_raw(rest, pow_int(qf, -b_exp));
          if (a_exp != b_exp) rest = mul_raw(rest, Form{1, {}, {{A, a_exp - b_exp}}});
        }
        f = std::move(rest);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return f;
}

Form mul(const Form& a, const Form& b) {
  Form f = mul_raw(a, b);
  if (f.zero()) return f;
  bool pos = false, neg = false;
  for (const auto& [p, k] : f.factors) (k > 0 ? pos : neg) = true;
  return pos && neg ? tidy(std::move(f)) : f;
}

Form inverse(const Form& a) {
  if (a.zero()) throw DomainError("division by zero");
  Form f;
  f.coeff = 1 / a.coeff;
  f.mono = mono_inverse(a.mono);
  for (const auto& [p, k] : a.factors) f.factors.emplace_back(p, -k);
  return f;
}

Form pow_int(const Form& a, long k) {
  if (k == 0) return const_form(1);
  if (k < 0) return pow_int(inverse(a), -k);
  if (a.zero()) return a;
  Form f;
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), a.coeff.get_num_mpz_t(), static_cast<unsigned long>(k));
  mpz_pow_ui(den.get_mpz_t(), a.coeff.get_den_mpz_t(), static_cast<unsigned long>(k));
  f.coeff = Rational(num, den);
  f.coeff.canonicalize();
  f.mono = mono_pow(a.mono, static_cast<int>(k));
  for (const auto& [p, e] : a.factors) f.factors.emplace_back(p, e * static_cast<int>(k));
  return f;
}

Form negate(Form a) {
  a.coeff = -a.coeff;
  return a;
}

Form add_many(std::vector<Form> terms) {
  std::erase_if(terms, [](const Form& f) { return f.zero(); });
  if (terms.empty()) return zero_form();
  if (terms.size() == 1) return terms.front();

  // Common monomial: minimum exponent per atom (absent counts as 0).
  Monomial common = terms.front().mono;
  for (std::size_t t = 1; t < terms.size(); ++t) {
    Monomial next;
    const Monomial& m = terms[t].mono;
    std::size_t i = 0, j = 0;
    while (i < common.size() || j < m.size()) {
      int c = i == common.size() ? 1 : j == m.size() ? -1 : compare_atoms(common[i].first, m[j].first);
      if (c < 0) {
        if (common[i].second < 0) next.push_back(common[i]);
        ++i;
      } else if (c > 0) {
        if (m[j].second < 0) next.push_back(m[j]);
        ++j;
      } else {
        next.emplace_back(common[i].first, std::min(common[i].second, m[j].second));
        ++i;
        ++j;
      }
    }
    common = std::move(next);
  }
  // Common factors, same rule.
  std::vector<std::pair<PolyRef, int>> shared = terms.front().factors;
  for (auto& [p, k] : shared) k = std::min(k, 0);
  for (std::size_t t = 0; t < terms.size(); ++t) {
    for (const auto& [p, k] : terms[t].factors) {
      bool found = false;
      for (auto& [q, e] : shared)
        if (compare_polys(*p, *q) == 0) {
          found = true;
          break;
        }
      if (!found && k < 0) shared.emplace_back(p, 0);
    }
  }
  for (auto& [p, e] : shared) {
    for (const auto& term : terms) {
      int here = 0;
      for (const auto& [q, k] : term.factors)
        if (q == p || compare_polys(*q, *p) == 0) {
          here = k;
          break;
        }
      e = std::min(e, here);
    }
  }
  std::erase_if(shared, [](const auto& f) { return f.second == 0; });
  sort_factors(shared);

  const Form common_form{1, common, shared};
  const Form divisor = inverse(common_form);
  Poly total;
  for (const auto& term : terms) {
    const Form residual = mul_raw(term, divisor);
    for (const auto& [m, c] : expand(residual)) add_term(total, m, c);
  }
  if (total.empty()) return zero_form();
  return mul(common_form, normalize_poly(total));
}

// ---------------------------------------------------------------------------
// Trig and exp of sums

struct AngleTerm {
  Expr angle;
  long multiplicity;
};

constexpr long kMaxMultiplicity = 64;
constexpr std::size_t kMaxAngleTerms = 16;

// Splits an argument into sum of k_j * theta_j with integer k_j. Anything that
// is not a polynomial becomes a single opaque angle with a normalized sign.
std::vector<AngleTerm> decompose_angle(const Form& arg) {
  std::vector<AngleTerm> out;
  if (arg.zero()) return out;
  bool polynomial = true;
  for (const auto& [p, k] : arg.factors)
    if (k < 0) polynomial = false;
  if (polynomial) {
    const Poly p = expand(arg);
    if (p.size() <= kMaxAngleTerms) {
      for (const auto& [m, c] : p) {
        const mpz_class& num = c.get_num();
        const mpz_class& den = c.get_den();
        Form unit{Rational(1, 1) / Rational(den), {}, {}};
        long mult = 0;
        if (num.fits_slong_p() && std::labs(num.get_si()) <= kMaxMultiplicity) {
          mult = num.get_si();
        } else {
          unit.coeff = c < 0 ? Rational(-c) : c;
          mult = c < 0 ? -1 : 1;
        }
        Poly single;
        single[m] = 1;
        const Form mono_form = mul(unit, normalize_poly(single));
        out.push_back({to_expr(mono_form), mult});
      }
      return out;
    }
  }
  if (arg.coeff < 0)
    out.push_back({to_expr(negate(arg)), -1});
  else
    out.push_back({to_expr(arg), 1});
  return out;
}

struct ComplexPoly {
  Poly re;
  Poly im;
};

ComplexPoly complex_mul(const ComplexPoly& a, const ComplexPoly& b) {
  ComplexPoly out;
  out.re = poly_mul(a.re, b.re);
  for (const auto& [m, c] : poly_mul(a.im, b.im)) add_term(out.re, m, -c);
  out.im = poly_mul(a.re, b.im);
  for (const auto& [m, c] : poly_mul(a.im, b.re)) add_term(out.im, m, c);
  return out;
}

// cos(arg) + i sin(arg) expanded.
ComplexPoly euler(const Form& arg) {
  ComplexPoly acc{poly_const(1), {}};
  for (const auto& [angle, mult] : decompose_angle(arg)) {
    const AtomRef s = fn_atom(AtomKind::Sin, angle);
    const AtomRef c = fn_atom(AtomKind::Cos, angle);
    ComplexPoly unit;
    unit.re[Monomial{{c, 1}}] = 1;
    unit.im[Monomial{{s, 1}}] = mult < 0 ? -1 : 1;
    for (long k = 0; k < std::labs(mult); ++k) acc = complex_mul(acc, unit);
  }
  return acc;
}

Form exp_form(const Form& arg) {
  Form out = const_form(1);
  for (const auto& [angle, mult] : decompose_angle(arg))
    out = mul(out, Form{1, Monomial{{fn_atom(AtomKind::Exp, angle), static_cast<int>(mult)}}, {}});
  return out;
}

Form pow_form(const Form& base, const Rational& exponent) {
  if (exponent.get_den() == 1) {
    const mpz_class& k = exponent.get_num();
    if (!k.fits_slong_p() || std::labs(k.get_si()) > 4096)
      throw DomainError("integer exponent too large");
    return pow_int(base, k.get_si());
  }
  if (base.zero()) {
    if (exponent < 0) throw DomainError("division by zero");
    return base;
  }
  mpz_class floor;
  mpz_fdiv_q(floor.get_mpz_t(), exponent.get_num_mpz_t(), exponent.get_den_mpz_t());
  const Rational frac = exponent - Rational(floor);
  const Form whole = pow_int(base, floor.get_si());
  return mul(whole, atom_form(fn_atom(AtomKind::Pow, to_expr(base), frac)));
}

// ---------------------------------------------------------------------------
// Expr -> Form

class Converter {
 public:
  Form convert(const Expr& e) {
    if (auto it = memo_.find(e.node()); it != memo_.end()) return it->second;
    Form f = compute(e);
    memo_.emplace(e.node(), f);
    return f;
  }

 private:
  std::unordered_map<const Node*, Form> memo_;

  void collect_sum(const Expr& e, bool negative, std::vector<Form>& out) {
    switch (e.op()) {
      case Op::Add:
        collect_sum(e.lhs(), negative, out);
        collect_sum(e.rhs(), negative, out);
        return;
      case Op::Sub:
        collect_sum(e.lhs(), negative, out);
        collect_sum(e.rhs(), !negative, out);
        return;
      case Op::Neg:
        collect_sum(e.lhs(), !negative, out);
        return;
      default: {
        Form f = convert(e);
        out.push_back(negative ? negate(std::move(f)) : std::move(f));
      }
    }
  }

  Form compute(const Expr& e) {
    switch (e.op()) {
      case Op::Const: return const_form(e.value());
      case Op::Param: return atom_form(param_atom(e.name()));
      case Op::Var: return atom_form(var_atom(e.index()));
      case Op::Neg: return negate(convert(e.lhs()));
      case Op::Add:
      case Op::Sub: {
        std::vector<Form> terms;
        collect_sum(e, false, terms);
        return add_many(std::move(terms));
      }
      case Op::Mul: return mul(convert(e.lhs()), convert(e.rhs()));
      case Op::Div: return mul(convert(e.lhs()), inverse(convert(e.rhs())));
      case Op::Pow: return pow_form(convert(e.lhs()), e.value());
      case Op::Sqrt: return pow_form(convert(e.lhs()), Rational(1, 2));
      case Op::Sin: return normalize_poly(euler(convert(e.lhs())).im);
      case Op::Cos: return normalize_poly(euler(convert(e.lhs())).re);
      case Op::Tan: {
        const ComplexPoly z = euler(convert(e.lhs()));
        return mul(normalize_poly(z.im), inverse(normalize_poly(z.re)));
      }
      case Op::Sec: return inverse(normalize_poly(euler(convert(e.lhs())).re));
      case Op::Exp: return exp_form(convert(e.lhs()));
      case Op::Ln: {
        const Form arg = convert(e.lhs());
        if (arg.zero()) throw DomainError("ln of zero");
        if (arg.coeff == 1 && arg.mono.empty() && arg.factors.empty()) return zero_form();
        return atom_form(fn_atom(AtomKind::Ln, to_expr(arg)));
      }
    }
    throw std::logic_error("to_form: unhandled operator");
  }
};

// ---------------------------------------------------------------------------
// Form -> Expr

Expr atom_expr(AtomRef a) {
  switch (a->kind) {
    case AtomKind::Var: return Expr::var(a->index);
    case AtomKind::Param: return Expr::param(a->name);
    case AtomKind::Sin: return sin(a->arg);
    case AtomKind::Cos: return cos(a->arg);
    case AtomKind::Exp: return exp(a->arg);
    case AtomKind::Ln: return ln(a->arg);
    case AtomKind::Pow: return pow(a->arg, a->exponent);
  }
  return {};
}

Expr product(const std::vector<Expr>& fs) {
  if (fs.empty()) return Expr::constant(1);
  Expr acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = acc * fs[i];
  return acc;
}

// c * m with c > 0 given as the magnitude; `negative` puts the sign on the
// first factor.
Expr term_expr(const Rational& magnitude, const Monomial& m, bool negative) {
  std::vector<Expr> fs;
  if (magnitude != 1 || m.empty()) fs.push_back(Expr::constant(magnitude));
  for (const auto& [a, e] : m) {
    if (e > 0)
      fs.push_back(pow(atom_expr(a), e));
    else if (a->kind == AtomKind::Cos)
      fs.push_back(pow(sec(a->arg), -e));
    else
      fs.push_back(pow(atom_expr(a), e));
  }
  if (negative) fs.front() = -fs.front();
  return product(fs);
}

Expr poly_expr(const Poly& p) {
  Expr acc;
  bool first = true;
  for (const auto& [m, c] : p) {
    const bool negative = c < 0;
    const Rational magnitude = negative ? Rational(-c) : c;
    if (first) {
      acc = term_expr(magnitude, m, negative);
      first = false;
    } else if (negative) {
      acc = acc - term_expr(magnitude, m, false);
    } else {
      acc = acc + term_expr(magnitude, m, false);
    }
  }
  return acc;
}

}  // namespace

Form to_form(const Expr& e) {
  Converter c;
  return c.convert(e);
}

Expr to_expr(const Form& f) {
  if (f.zero()) return Expr();
  std::vector<Expr> num, den;
  const bool negative = f.coeff < 0;
  const Rational magnitude = negative ? Rational(-f.coeff) : f.coeff;
  if (magnitude.get_num() != 1) num.push_back(Expr::constant(Rational(magnitude.get_num())));
  if (magnitude.get_den() != 1) den.push_back(Expr::constant(Rational(magnitude.get_den())));
  for (const auto& [a, e] : f.mono) {
    if (e > 0)
      num.push_back(pow(atom_expr(a), e));
    else if (a->kind == AtomKind::Cos)
      num.push_back(pow(sec(a->arg), -e));
    else
      den.push_back(pow(atom_expr(a), -e));
  }
  for (const auto& [p, k] : f.factors) {
    if (k > 0)
      num.push_back(pow(poly_expr(*p), k));
    else
      den.push_back(pow(poly_expr(*p), -k));
  }
  if (num.empty()) num.push_back(Expr::constant(1));
  if (negative) num.front() = -num.front();
  Expr out = product(num);
  if (!den.empty()) out = out / product(den);
  return out;
}

}  // namespace miold::expr::canon
