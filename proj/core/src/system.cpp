#include <sstream>

#include "miold/errors.hpp"
#include "miold/model/system.hpp"

namespace miold::model {

using expr::simplify;

Expr MechanicalSystem::partial(const Expr& e, int a) const {
  if (!chart) return simplify(expr::diff(e, a));
  Expr acc;
  for (int i = 0; i < n; ++i) {
    const Expr& w = chart->jacobian_inv[i][a];
    if (w.is_const(0)) continue;
    const Expr d = expr::diff(e, i);
    if (d.is_const(0)) continue;
    acc = acc + w * d;
  }
  return simplify(acc);
}

std::vector<std::string> MechanicalSystem::state_names() const {
  std::vector<std::string> names = vars;
  for (const auto& x : vars) {
    const bool indexed = x.size() > 1 && x[0] == 'x' &&
                         x.find_first_not_of("0123456789", 1) == std::string::npos;
    names.push_back(indexed ? "v" + x.substr(1) : "d" + x);
  }
  return names;
}

void MechanicalSystem::validate(const expr::ZeroTestOptions& zero) const {
  auto fail = [&](const std::string& what) {
    throw InputError((name.empty() ? std::string("system") : name) + ": " + what);
  };
  if (n <= 0) fail("n must be positive");
  if (m <= 0) fail("m must be positive");
  if (m > n) fail("more outputs than degrees of freedom (m > n)");
  if (static_cast<int>(vars.size()) != n) fail("expected " + std::to_string(n) + " variable names");
  if (static_cast<int>(gamma.size()) != n * n * n) fail("Christoffel array has wrong size");
  if (static_cast<int>(e.size()) != n) fail("e must have n entries");
  if (static_cast<int>(g.size()) != m) fail("expected m control fields");
  for (const auto& gr : g)
    if (static_cast<int>(gr.size()) != n) fail("control field must have n entries");
  if (static_cast<int>(h.size()) != m) fail("expected m outputs");

  auto configuration_only = [&](const Expr& x, const std::string& what) {
    if (expr::variable_count(x) > n) fail(what + " depends on velocities");
  };
  for (const auto& x : gamma) configuration_only(x, "Gamma");
  for (const auto& x : e) configuration_only(x, "e");
  for (const auto& gr : g)
    for (const auto& x : gr) configuration_only(x, "g");
  for (const auto& x : h) configuration_only(x, "output");

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        const Expr d = christoffel(i, j, k) - christoffel(i, k, j);
        if (!expr::is_zero(d, zero).zero())
          fail("Christoffel symbols not symmetric in (j,k) at i=" + std::to_string(i + 1) +
               ", j=" + std::to_string(j + 1) + ", k=" + std::to_string(k + 1));
      }
}

MechanicalSystem MechanicalSystem::with_outputs(ExprVector outputs) const {
  MechanicalSystem s = *this;
  s.h = std::move(outputs);
  return s;
}

ExprVector drift_acceleration(const MechanicalSystem& s) {
  const int n = s.n;
  ExprVector acc(n);
  for (int i = 0; i < n; ++i) {
    Expr quad;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Expr& c = s.christoffel(i, j, k);
        if (c.is_const(0)) continue;
        quad = quad + c * Expr::var(n + j) * Expr::var(n + k);
      }
    acc[i] = simplify(s.e[i] - quad);
  }
  return acc;
}

TangentLift tangent_lift(const MechanicalSystem& s) {
  TangentLift lift;
  const int n = s.n;
  for (int i = 0; i < n; ++i) lift.F.push_back(Expr::var(n + i));
  for (auto& a : drift_acceleration(s)) lift.F.push_back(a);
  for (const auto& gr : s.g) {
    ExprVector G(n);
    G.insert(G.end(), gr.begin(), gr.end());
    lift.G.push_back(std::move(G));
  }
  return lift;
}

std::optional<Expr> energy(const MechanicalSystem& s) {
  if (!s.lagrangian) return std::nullopt;
  const int n = s.n;
  Expr t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      t = t + s.lagrangian->M[i][j] * Expr::var(n + i) * Expr::var(n + j);
  return simplify(Expr::constant(expr::Rational(1, 2)) * t + s.lagrangian->V);
}

Point parse_point(std::string_view text, const MechanicalSystem& s) {
  Point p;
  p.params = s.params;
  std::set<std::string> known;
  for (const auto& [k, v] : s.params) known.insert(k);
  expr::ParseOptions opts{&known, nullptr};

  auto parse_values = [&](std::string body, const char* what) {
    for (char& c : body)
      if (c == '[' || c == ']') c = ' ';
    std::vector<double> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        out.push_back(expr::eval(expr::parse(item, {}, opts), std::span<const double>{}, s.params));
      } catch (const InputError& err) {
        throw InputError(std::string("point ") + what + ": " + err.what());
      }
    }
    if (static_cast<int>(out.size()) != s.n)
      throw InputError(std::string("point ") + what + " needs " + std::to_string(s.n) + " values, got " +
                       std::to_string(out.size()));
    return out;
  };

  std::stringstream ss{std::string(text)};
  std::string group;
  while (std::getline(ss, group, ';')) {
    const auto eq = group.find('=');
    if (eq == std::string::npos) {
      if (group.find_first_not_of(" \t") == std::string::npos) continue;
      throw InputError("point: expected 'x=...' or 'v=...', got '" + group + "'");
    }
    std::string key = group.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key == "x")
      p.x = parse_values(group.substr(eq + 1), "x");
    else if (key == "v")
      p.v = parse_values(group.substr(eq + 1), "v");
    else
      throw InputError("point: unknown component '" + key + "'");
  }
  if (static_cast<int>(p.x.size()) != s.n) throw InputError("point: missing x");
  return p;
}

bool structurally_equal(const MechanicalSystem& a, const MechanicalSystem& b) {
  if (a.n != b.n || a.m != b.m) return false;
  auto same = [](const Expr& x, const Expr& y) { return simplify(x) == simplify(y); };
  for (std::size_t i = 0; i < a.gamma.size(); ++i)
    if (!same(a.gamma[i], b.gamma[i])) return false;
  for (int i = 0; i < a.n; ++i)
    if (!same(a.e[i], b.e[i])) return false;
  for (int r = 0; r < a.m; ++r)
    for (int i = 0; i < a.n; ++i)
      if (!same(a.g[r][i], b.g[r][i])) return false;
  for (int l = 0; l < a.m; ++l)
    if (!same(a.h[l], b.h[l])) return false;
  return true;
}

}  // namespace miold::model
