#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "miold/errors.hpp"
#include "miold/sim/sim.hpp"
#include "support.hpp"

namespace {

using namespace miold;
using namespace miold::test;
using sim::InputSignal;
using sim::InputVector;
using sim::Trajectory;

MechanicalSystem parse_system(const std::string& text) {
  return model::build_system(model::SystemDocument::parse(text)).system;
}

expr::Point start(std::vector<double> x, std::vector<double> v) {
  expr::Point p;
  p.x = std::move(x);
  p.v = std::move(v);
  return p;
}

struct Law {
  model::SystemCase c;
  expr::Point point;
  synthesis::Synthesis syn;
};

Law law_for(const std::string& file, const std::string& regime, const std::string& set) {
  Law l;
  l.c = load_case(file, regime, set);
  l.point = point_of(l.c);
  l.syn = synthesis::synthesize(l.c.system, geometry::half_degree(l.c.system, l.point), l.point);
  return l;
}

// Chain normal form with the given half-degrees: e^a = x^(a+1) inside each
// chain, g_l at the end of chain l.
MechanicalSystem chains(const std::vector<int>& nu) {
  MechanicalSystem s;
  s.m = static_cast<int>(nu.size());
  for (int k : nu) s.n += k;
  for (int i = 0; i < s.n; ++i) s.vars.push_back("x" + std::to_string(i + 1));
  s.gamma.assign(s.n * s.n * s.n, Expr());
  s.e.assign(s.n, Expr());
  s.g.assign(s.m, ExprVector(s.n, Expr()));
  int off = 0;
  for (int l = 0; l < s.m; ++l) {
    for (int q = 0; q + 1 < nu[l]; ++q) s.e[off + q] = Expr::var(off + q + 1);
    s.g[l][off + nu[l] - 1] = Expr::constant(1);
    s.h.push_back(Expr::var(off));
    off += nu[l];
  }
  s.validate();
  return s;
}

TEST(Integrate, DoubleIntegrator) {
  const auto s = parse_system(R"s(
n = 1
m = 1
vars = ["x"]
outputs = ["x"]
[christoffel]
e = [0]
g.1 = [1]
)s");
  sim::IntegrateOptions o;
  o.horizon = 1.0;
  o.dt = 1e-3;
  const auto t = sim::integrate(s, start({0}, {0}), {InputSignal::step(1.0, 0.0)}, o);
  ASSERT_TRUE(t.ok());
  EXPECT_DOUBLE_EQ(t.times.back(), 1.0);
  EXPECT_NEAR(t.x.back()[0], 0.5, 1e-9);
  EXPECT_NEAR(t.v.back()[0], 1.0, 1e-9);
  EXPECT_EQ(t.size(), 1001u);
}

// Upright equilibrium at 0 is unstable; the hanging one at pi oscillates at
// sqrt(m0/md).
TEST(Integrate, WheelPendulumSmallOscillation) {
  const auto c = load_case("iwp.toml", "", "angle");
  const auto& s = c.system;
  const double m0 = s.params.at("m0"), md = s.params.at("md");
  sim::IntegrateOptions o;
  o.horizon = 10.0;
  o.dt = 1e-3;
  const auto t = sim::integrate(s, start({std::numbers::pi + 0.01, 0}, {0, 0}), {InputSignal::zero()}, o);
  ASSERT_TRUE(t.ok());
  std::vector<double> crossings;
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double a = t.x[k - 1][0] - std::numbers::pi, b = t.x[k][0] - std::numbers::pi;
    if (a * b < 0) crossings.push_back(t.times[k - 1] + (t.times[k] - t.times[k - 1]) * a / (a - b));
  }
  ASSERT_GE(crossings.size(), 4u);
  const double half_period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  const double omega = std::numbers::pi / half_period;
  EXPECT_NEAR(omega / std::sqrt(m0 / md), 1.0, 0.02);
}

TEST(Integrate, PendulumEnergyIsConserved) {
  const auto c = load_case("double_pendulum_base.toml", "", "joints");
  const auto E = model::energy(c.system);
  ASSERT_TRUE(E.has_value());
  sim::IntegrateOptions o;
  o.horizon = 10.0;
  o.dt = 1e-4;
  o.record_every = 100;
  const auto t = sim::integrate(c.system, point_of(c), InputVector(c.system.m), o);
  ASSERT_TRUE(t.ok());
  auto energy_at = [&](std::size_t k) {
    auto z = t.x[k];
    z.insert(z.end(), t.v[k].begin(), t.v[k].end());
    return expr::eval(*E, z, c.system.params);
  };
  const double e0 = energy_at(0);
  double drift = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) drift = std::max(drift, std::abs(energy_at(k) - e0));
  EXPECT_LT(drift, 1e-6);
}

TEST(Integrate, FourthOrderConvergence) {
  const auto s = parse_system(R"s(
n = 1
m = 1
vars = ["x"]
outputs = ["x"]
[christoffel]
G.1.1.1 = "x/4"
e = ["-x"]
g.1 = [1]
)s");
  auto error_at = [&](double dt) {
    sim::IntegrateOptions o;
    o.horizon = 2.0;
    o.dt = dt;
    const auto coarse = sim::integrate(s, start({0.5}, {0.2}), {InputSignal::sinusoid(1.0, 0.5)}, o);
    o.dt = 1e-4;
    const auto fine = sim::integrate(s, start({0.5}, {0.2}), {InputSignal::sinusoid(1.0, 0.5)}, o);
    return std::abs(coarse.x.back()[0] - fine.x.back()[0]);
  };
  const double order = std::log2(error_at(0.025) / error_at(0.0125));
  EXPECT_GE(order, 3.5);
  EXPECT_LE(order, 4.5);
}

TEST(Integrate, StatusOnAbort) {
  const auto blowup = parse_system(R"s(
n = 1
m = 1
vars = ["x"]
outputs = ["x"]
[christoffel]
e = ["x^3"]
g.1 = [1]
)s");
  sim::IntegrateOptions o;
  o.horizon = 5.0;
  o.dt = 1e-3;
  const auto d = sim::integrate(blowup, start({2}, {0}), {InputSignal::zero()}, o);
  EXPECT_EQ(d.status, Trajectory::Status::Diverged);
  EXPECT_GT(d.abort_time, 0.0);
  EXPECT_LT(d.abort_time, 5.0);

  const auto root = parse_system(R"s(
n = 1
m = 1
vars = ["x"]
outputs = ["sqrt(x)"]
[christoffel]
e = [0]
g.1 = [1]
)s");
  const auto r = sim::integrate(root, start({0.1}, {-1}), {InputSignal::zero()}, o);
  EXPECT_EQ(r.status, Trajectory::Status::DomainError);
  EXPECT_NEAR(r.abort_time, 0.1, 2e-3);
  EXPECT_FALSE(r.message.empty());
  // The partial trajectory is kept.
  EXPECT_GT(r.size(), 50u);

  EXPECT_THROW(sim::integrate(root, start({0.1}, {0}), {}, o), InputError);
  o.dt = 0;
  EXPECT_THROW(sim::integrate(root, start({0.1}, {0}), {InputSignal::zero()}, o), InputError);
}

// D = x2 reaches zero at t = 0.5 while the state stays bounded.
TEST(ClosedLoop, StopsAtSingularLocus) {
  const auto s = parse_system(R"s(
n = 2
m = 1
vars = ["x1", "x2"]
outputs = ["x1"]
[christoffel]
e = [0, 0]
g.1 = ["x2", 0]
)s");
  const auto p = start({0, 0.5}, {0, -1});
  const auto syn = synthesis::synthesize(s, geometry::half_degree(s, p), p);
  sim::IntegrateOptions o;
  o.horizon = 1.0;
  o.dt = 1e-3;
  const auto run = sim::closed_loop_run(s, syn.law, p, {InputSignal::step(1, 0)}, o);
  EXPECT_EQ(run.original.status, Trajectory::Status::SingularLocus);
  EXPECT_NEAR(run.original.abort_time, 0.5, 2e-3);
  EXPECT_NE(run.original.message.find("singular locus"), std::string::npos);
  EXPECT_EQ(run.transformed.status, run.original.status);
}

// Near x3 = pi/2 the cart feedback grows like 1/cos x3 and the state blows up
// before sigma_min(D) is resolved; either way the run must abort.
TEST(ClosedLoop, AbortsNearCartSingularLocus) {
  const auto l = law_for("tora3.toml", "", "cart");
  const auto run = sim::closed_loop_run(l.c.system, l.syn.law, start({0, 0, 1.5}, {0, 0, 2}), InputVector(1));
  EXPECT_FALSE(run.original.ok());
  EXPECT_LT(run.original.abort_time, 0.1);
}

// With the joint feedback each joint angle is a double integrator.
TEST(ClosedLoop, PendulumJointsStepResponses) {
  const auto l = law_for("double_pendulum_base.toml", "", "joints");
  const auto& s = l.c.system;
  for (int j = 0; j < 2; ++j) {
    InputVector u(2);
    u[j] = InputSignal::step(1.0, 0.1);
    const auto run = sim::closed_loop_run(s, l.syn.law, l.point, u);
    ASSERT_TRUE(run.original.ok()) << run.original.message;
    const auto& x0 = *l.point.v;
    double gap = 0.0;
    for (std::size_t k = 0; k < run.original.size(); ++k) {
      const double t = run.original.times[k];
      for (int i = 0; i < 2; ++i) {
        double y = l.point.x[i + 1] + x0[i + 1] * t;
        if (i == j && t > 0.1) y += 0.5 * (t - 0.1) * (t - 0.1);
        gap = std::max(gap, std::abs(run.original.y[k][i] - y));
      }
    }
    EXPECT_LT(gap, 1e-6) << "channel " << j;
  }
}

// The transformed trajectory of the closed loop is the trajectory of the chain
// normal form started at (phi(x0), J v0).
TEST(ClosedLoop, TransformedTrajectoryMatchesNormalForm) {
  for (const auto& [file, set] : {std::pair{"iwp.toml", "combined"}, {"tora3.toml", "cart"}, {"tora3.toml", "flat"}}) {
    SCOPED_TRACE(std::string(file) + " " + set);
    const auto l = law_for(file, "", set);
    const auto& law = l.syn.law;
    InputVector u{InputSignal::sinusoid(0.1, 0.7) + InputSignal::step(0.05, 0.3)};
    const auto run = sim::closed_loop_run(l.c.system, law, l.point, u);
    ASSERT_TRUE(run.original.ok()) << run.original.message;
    const auto& tr = run.transformed;
    const int mu = law.mu();
    const auto nf = chains(law.nu);
    const auto direct = sim::integrate(
        nf, start({tr.x[0].begin(), tr.x[0].begin() + mu}, {tr.v[0].begin(), tr.v[0].begin() + mu}), u);
    ASSERT_TRUE(direct.ok());
    ASSERT_EQ(direct.size(), tr.size());
    double gap = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k)
      for (int a = 0; a < mu; ++a)
        gap = std::max({gap, std::abs(tr.x[k][a] - direct.x[k][a]), std::abs(tr.v[k][a] - direct.v[k][a])});
    EXPECT_LT(gap, 1e-6);
  }
}

// Fourth difference of the cart output reproduces the new input.
TEST(ClosedLoop, CartOutputFourthDerivativeIsInput) {
  const auto l = law_for("tora3.toml", "", "cart");
  sim::IntegrateOptions o;
  o.horizon = 1.0;
  o.record_every = 100;  // H = 0.01
  const InputVector u{InputSignal::sinusoid(0.2, 0.5)};
  const auto run = sim::closed_loop_run(l.c.system, l.syn.law, l.point, u, o);
  ASSERT_TRUE(run.original.ok()) << run.original.message;
  const auto& t = run.original;
  const double H = t.times[1] - t.times[0];
  double gap = 0.0;
  for (std::size_t k = 2; k + 2 < t.size(); ++k) {
    const double d4 = (t.y[k - 2][0] - 4 * t.y[k - 1][0] + 6 * t.y[k][0] - 4 * t.y[k + 1][0] + t.y[k + 2][0]) /
                      std::pow(H, 4);
    gap = std::max(gap, std::abs(d4 - u[0](t.times[k])));
  }
  EXPECT_LT(gap, 1e-4);
}

TEST(Certificate, PassesOnSolvableCorpus) {
  int checked = 0;
  for (const auto& entry : corpus_entries()) {
    const auto c = load_case(entry.file, entry.regime, entry.set);
    const auto p = point_of(c);
    const auto rep = geometry::half_degree(c.system, p);
    if (!rep.solvable()) continue;
    SCOPED_TRACE(entry.file + " " + entry.regime + entry.set);
    const auto syn = synthesis::synthesize(c.system, rep, p);
    sim::CertificateOptions o;
    if (c.step_amplitude) o.step_amplitude = *c.step_amplitude;
    const auto cert = sim::decoupling_certificate(c.system, syn.law, p, o);
    EXPECT_TRUE(cert.passed) << cert.failure;
    EXPECT_TRUE(cert.runs_ok);
    EXPECT_LT(cert.superposition_deviation, 1e-6);
    for (const auto& ch : cert.channels) {
      EXPECT_LT(ch.max_cross, 1e-7);
      EXPECT_LT(ch.analytic_deviation, 1e-5);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 6);
}

// Dropping the velocity terms of the feedback must break decoupling.
TEST(Certificate, NegativeControlFails) {
  auto l = law_for("double_pendulum_base.toml", "", "joints");
  for (auto& m : l.syn.law.C) m = expr::zero_matrix(3, 3);
  const auto cert = sim::decoupling_certificate(l.c.system, l.syn.law, l.point);
  EXPECT_TRUE(cert.runs_ok);
  EXPECT_FALSE(cert.passed);
  double worst = 0.0;
  for (const auto& ch : cert.channels) worst = std::max(worst, ch.max_cross);
  EXPECT_GT(worst, 1e-4);
}

// Superposition holds for the decoupled closed loop and fails in open loop.
TEST(Certificate, SuperpositionMeasuresLinearity) {
  const auto l = law_for("iwp.toml", "", "combined");
  const auto cert = sim::decoupling_certificate(l.c.system, l.syn.law, l.point);
  EXPECT_LT(cert.superposition_deviation, 1e-6);

  const auto& s = l.c.system;
  const auto a = InputSignal::step(1.0, 0.1), b = InputSignal::sinusoid(0.5, 1.0);
  const auto y0 = sim::integrate(s, l.point, {InputSignal::zero()});
  const auto ya = sim::integrate(s, l.point, {a});
  const auto yb = sim::integrate(s, l.point, {b});
  const auto yab = sim::integrate(s, l.point, {a + b});
  double dev = 0.0;
  for (std::size_t k = 0; k < y0.size(); ++k)
    dev = std::max(dev, std::abs(yab.y[k][0] - ya.y[k][0] - yb.y[k][0] + y0.y[k][0]));
  EXPECT_GT(dev, 1e-4);
}

TEST(Certificate, ZeroHorizon) {
  const auto l = law_for("iwp.toml", "", "combined");
  sim::CertificateOptions o;
  o.integrate.horizon = 0.0;
  const auto cert = sim::decoupling_certificate(l.c.system, l.syn.law, l.point, o);
  EXPECT_TRUE(cert.passed);
  EXPECT_EQ(cert.baseline.size(), 1u);
}

TEST(Certificate, ChainResponse) {
  const std::vector<double> x{1.0, 2.0}, v{0.5, -1.0};
  // y = 1 + 0.5 t + 2 t^2/2 - t^3/6 + A (t - t0)^4/24
  const double t = 0.7;
  EXPECT_NEAR(sim::chain_response(x, v, t, 3.0, 0.2),
              1 + 0.5 * t + t * t - t * t * t / 6 + 3.0 * std::pow(0.5, 4) / 24, 1e-14);
}

TEST(Csv, HeaderAndRows) {
  const auto c = load_case("iwp.toml", "", "angle");
  sim::IntegrateOptions o;
  o.horizon = 0.01;
  o.dt = 0.005;
  const auto t = sim::integrate(c.system, point_of(c), {InputSignal::step(1, 0)}, o);
  std::ostringstream out;
  sim::write_csv(out, t, c.system.state_names());
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x1,x2,v1,v2,u1,y1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Signals, Shapes) {
  EXPECT_EQ(InputSignal::step(2, 1)(0.999), 0.0);
  EXPECT_EQ(InputSignal::step(2, 1)(1.0), 2.0);
  EXPECT_NEAR(InputSignal::sinusoid(1, 0.25)(1.0), 1.0, 1e-15);
  const auto table = InputSignal::piecewise({{0.0, 1.0}, {0.5, -1.0}});
  EXPECT_EQ(table(0.25), 1.0);
  EXPECT_EQ(table(0.75), -1.0);
  EXPECT_EQ((InputSignal::step(1, 0) + table)(0.75), 0.0);
  EXPECT_THROW(InputSignal::piecewise({{1.0, 1.0}, {0.5, 0.0}}), InputError);
}

}  // namespace
