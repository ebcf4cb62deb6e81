#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>
#include <regex>

#include "miold/errors.hpp"
#include "miold/expr/simplify.hpp"
#include "miold/model/system.hpp"
#include "miold/model/system_file.hpp"
#include "miold/sim/sim.hpp"
#include "support.hpp"

namespace {

using namespace miold;
using namespace miold::test;

model::SystemCase parse_case(const std::string& text, const std::string& regime = {}) {
  return model::build_system(model::SystemDocument::parse(text, "test.toml"), regime);
}

bool vanishes(const Expr& e) { return expr::is_zero(e).zero(); }

TEST(Lagrangian, ConstantMetricHasNoChristoffels) {
  const auto c = parse_case(R"(
name = "oscillator"
n = 2
vars = ["x1", "x2"]
outputs = ["x1"]
[params]
m1 = 2
m2 = 3
k = 5
[lagrangian]
M.1.1 = "m1"
M.2.2 = "m2"
V = "(1/2)*k*x1^2"
tau.1 = [1, 0]
)");
  const auto& s = c.system;
  for (const auto& g : s.gamma) EXPECT_TRUE(expr::simplify(g).is_const(0));
  EXPECT_EQ(expr::simplify(s.e[0]), expr::simplify(expr::parse("-(k/m1)*x1", s.vars)));
  EXPECT_TRUE(expr::simplify(s.e[1]).is_const(0));
  EXPECT_EQ(expr::simplify(s.g[0][0]), expr::simplify(expr::parse("1/m1", s.vars)));
}

// Printed closed forms of the pendulum-on-base connection, with the common factor M.
TEST(Lagrangian, DoublePendulumChristoffelsMatchClosedForms) {
  const auto c = load_case("double_pendulum_base.toml");
  const auto& s = c.system;
  const std::string M = "(1/(l1*m1*(m1+m2)*sin(x1)^2 + l1*m2*m3*sin(x1-x2)^2 + l1*m1*m3))";
  auto form = [&](std::string text) {
    text = std::regex_replace(text, std::regex("MM"), M);
    return c.parse_expressions({text})[0];
  };
  EXPECT_TRUE(vanishes(s.christoffel(0, 0, 0) -
                      form("(1/2)*MM*l1*m1*(m1+m2)*sin(2*x1) + (1/2)*MM*l1*m2*m3*sin(2*(x1-x2))")));
  EXPECT_TRUE(vanishes(s.christoffel(0, 1, 1) - form("MM*l2*m1*m2*sin(x1)*cos(x2) + MM*l2*m2*m3*sin(x1-x2)")));
  EXPECT_TRUE(vanishes(s.christoffel(1, 0, 0) - form("-(l1^2*(m1+m2)*m3/l2)*MM*sin(x1-x2)")));
  EXPECT_TRUE(vanishes(s.christoffel(1, 1, 1) - form("-(l1*m2*m3/2)*MM*sin(2*(x1-x2))")));
  EXPECT_TRUE(vanishes(s.christoffel(2, 0, 0) - form("-l1^2*m1*(m1+m2)*MM*sin(x1)")));
  EXPECT_TRUE(vanishes(s.christoffel(2, 1, 1) - form("-l1*l2*m1*m2*MM*sin(x1)*cos(x1-x2)")));
  EXPECT_TRUE(vanishes(s.g[0][0] - form("(MM/l1)*(m1+m3+m2*sin(x2)^2)")));
  EXPECT_TRUE(vanishes(s.g[0][1] - form("-(MM/l2)*(m3*cos(x1-x2)+(m1+m2)*sin(x1)*sin(x2))")));
  EXPECT_TRUE(vanishes(s.g[1][0] - form("-(MM/l2)*(m3*cos(x1-x2)+(m1+m2)*sin(x1)*sin(x2))")));
  EXPECT_TRUE(vanishes(s.g[0][2] - form("MM*(m2*sin(x1-x2)*sin(x2)-m1*cos(x1))")));
  EXPECT_TRUE(vanishes(s.g[1][1] - form("(l1*(m1+m2)/(l2^2*m2))*MM*(m3+(m1+m2)*sin(x1)^2)")));
  EXPECT_TRUE(vanishes(s.g[1][2] - form("-(l1*(m1+m2)/l2)*MM*sin(x1)*sin(x1-x2)")));
  // Mixed symbols vanish for this metric.
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(vanishes(s.christoffel(i, 0, 1))) << i;
}

// e and g against a numerical solve of M a = -dV/dx + tau, dV by differences.
TEST(Lagrangian, DriftAndControlFieldsSolveTheMetricSystem) {
  const auto c = load_case("double_pendulum_base.toml");
  const auto& s = c.system;
  ASSERT_TRUE(s.lagrangian);
  const auto& L = *s.lagrangian;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto x = uniform(rng, 3, -1.2, 1.2);
    const Eigen::MatrixXd M = expr::evaluate(L.M, x, s.params);
    Eigen::VectorXd rhs(3);
    for (int i = 0; i < 3; ++i) rhs(i) = -central_difference(L.V, x, i, s.params);
    const Eigen::VectorXd e = M.ldlt().solve(rhs);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(expr::eval(s.e[i], x, s.params), e(i), 1e-7 * std::max(1.0, std::abs(e(i))));
    for (int r = 0; r < 2; ++r) {
      const Eigen::VectorXd g = M.ldlt().solve(expr::evaluate(L.tau[r], x, s.params));
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(expr::eval(s.g[r][i], x, s.params), g(i), 1e-10);
    }
  }
}

// Euler-Lagrange residual M a + dM/dt v - (1/2) d(v^T M v)/dx + dV/dx - tau u along a
// simulated trajectory, with a from differences of the recorded velocities.
TEST(Lagrangian, EulerLagrangeResidualAlongTrajectory) {
  const auto c = parse_case(R"(
name = "random metric"
n = 2
vars = ["x1", "x2"]
outputs = ["x1", "x2"]
point = "x=0.3,-0.2; v=0.4,0.1"
[params]
c = 0.7
[lagrangian]
M.1.1 = "2 + x2^2"
M.1.2 = "c*x1*x2 + x1/2"
M.2.2 = "3 + x1^2 + x2"
V = "x1^2 + c*x1*x2 + x2^4/4"
tau.1 = [1, 0]
tau.2 = ["x2", 1]
)");
  const auto& s = c.system;
  const auto& L = *s.lagrangian;
  const auto start = point_of(c);
  sim::IntegrateOptions o;
  o.horizon = 0.5;
  o.dt = 1e-4;
  const sim::InputVector u{sim::InputSignal::sinusoid(0.8, 1.3), sim::InputSignal::step(0.5, 0.05)};
  const auto traj = sim::integrate(s, start, u, o);
  ASSERT_TRUE(traj.ok()) << traj.message;
  const double dt = o.dt;
  double worst = 0.0;
  for (std::size_t k = 10; k + 10 < traj.size(); k += 97) {
    const auto& x = traj.x[k];
    const auto& v = traj.v[k];
    Eigen::Vector2d a, vv(v[0], v[1]);
    for (int i = 0; i < 2; ++i) a(i) = (traj.v[k + 1][i] - traj.v[k - 1][i]) / (2 * dt);
    const Eigen::MatrixXd M = expr::evaluate(L.M, x, s.params);
    Eigen::Matrix2d Mdot = Eigen::Matrix2d::Zero();
    Eigen::Vector2d quad, dV, tau = Eigen::Vector2d::Zero();
    for (int j = 0; j < 2; ++j) {
      Eigen::Matrix2d dM;
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) dM(p, q) = central_difference(L.M[p][q], x, j, s.params);
      Mdot += dM * v[j];
      quad(j) = 0.5 * vv.dot(dM * vv);
      dV(j) = central_difference(L.V, x, j, s.params);
    }
    // The input at sample k is the one applied over the step starting there.
    for (int r = 0; r < 2; ++r) tau += expr::evaluate(L.tau[r], x, s.params) * u[r](traj.times[k]);
    const Eigen::Vector2d res = M * a + Mdot * vv - quad + dV - tau;
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Lagrangian, ChristoffelsAreSymmetric) {
  const auto c = load_case("double_pendulum_base.toml");
  const auto& s = c.system;
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int k = j + 1; k < s.n; ++k) EXPECT_EQ(s.christoffel(i, j, k), s.christoffel(i, k, j));
}

TEST(Lagrangian, DegenerateMetricRejected) {
  EXPECT_THROW(parse_case(R"(
n = 2
vars = ["x1", "x2"]
outputs = ["x1"]
[lagrangian]
M.1.1 = "1"
M.1.2 = "1"
M.2.2 = "1"
V = "0"
tau.1 = [1, 0]
)"),
               InputError);
  try {
    parse_case(R"(
n = 2
vars = ["x1", "x2"]
outputs = ["x1"]
point = "x=-1,0"
[lagrangian]
M.1.1 = "x1"
M.2.2 = "1"
V = "0"
tau.1 = [1, 0]
)");
    FAIL() << "indefinite metric accepted";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("positive definite"), std::string::npos);
  }
}

TEST(Lagrangian, EnergyIsAvailable) {
  const auto c = load_case("double_pendulum_base.toml");
  const auto E = model::energy(c.system);
  ASSERT_TRUE(E);
  const std::vector<double> z{0, 0, 0, 0, 0, 0};
  // At rest in the hanging configuration only the potential remains.
  const auto& p = c.system.params;
  EXPECT_NEAR(expr::eval(*E, z, p), -(p.at("m1") + p.at("m2")) * p.at("l1") * p.at("a") - p.at("m2") * p.at("l2") * p.at("a"),
              1e-12);
}

TEST(TangentLift, WheelPendulum) {
  const auto c = load_case("iwp.toml");
  const auto lift = model::tangent_lift(c.system);
  const std::vector<std::string> names{"x1", "x2", "v1", "v2"};
  std::set<std::string> known;
  for (const auto& [k, v] : c.system.params) known.insert(k);
  const std::vector<std::string> expect{"v1", "v2", "(m0/md)*sin(x1)", "-(m0/md)*sin(x1)"};
  for (int i = 0; i < 4; ++i)
    EXPECT_TRUE(expr::proven_zero(lift.F[i] - expr::parse(expect[i], names, {&known, nullptr}))) << i;
  for (int i = 0; i < 2; ++i) EXPECT_TRUE(lift.G[0][i].is_const(0));
}

TEST(TangentLift, ZeroSystem) {
  const auto c = parse_case(R"(
n = 2
m = 1
vars = ["x1", "x2"]
outputs = ["x1"]
[christoffel]
e = [0, 0]
g.1 = [1, 0]
)");
  const auto lift = model::tangent_lift(c.system);
  EXPECT_EQ(lift.F[0], Expr::var(2));
  EXPECT_EQ(lift.F[1], Expr::var(3));
  EXPECT_TRUE(expr::simplify(lift.F[2]).is_const(0));
  EXPECT_TRUE(expr::simplify(lift.F[3]).is_const(0));
}

TEST(TangentLift, SecondControlOfDegenerateRegime) {
  const auto c = load_case("example1.toml", "rho23");
  const auto lift = model::tangent_lift(c.system);
  for (int i = 0; i < 6; ++i) EXPECT_TRUE(expr::simplify(lift.G[1][i]).is_const(i == 5 ? 1 : 0)) << i;
}

TEST(Transform, IdentityLeavesSystemUnchanged) {
  for (const auto& entry : corpus_entries()) {
    const auto c = load_case(entry.file, entry.regime, entry.set);
    const auto t = model::MechanicalTransformation::identity(c.system.n, c.system.m);
    EXPECT_TRUE(model::structurally_equal(model::apply_transformation(c.system, t), c.system)) << entry.file;
  }
}

// Normalizing the second channel of the regular regime.
TEST(Transform, SecondChannelFeedbackOfRegularRegime) {
  const auto c = load_case("example1.toml", "rho22");
  const auto& s = c.system;
  auto t = model::MechanicalTransformation::identity(3, 2);
  const Expr g22 = s.g[1][1];
  t.gamma[1][1][1] = s.christoffel(1, 1, 1) / g22;
  t.gamma[1][2][2] = s.christoffel(1, 2, 2) / g22;
  t.alpha[1] = -s.e[1] / g22;
  t.beta[1][1] = Expr::constant(1) / g22;
  const auto out = model::apply_transformation(s, t);
  EXPECT_TRUE(expr::proven_zero(out.christoffel(1, 1, 1)));
  EXPECT_TRUE(expr::proven_zero(out.christoffel(1, 2, 2)));
  EXPECT_TRUE(expr::proven_zero(out.e[1]));
  EXPECT_TRUE(expr::simplify(out.g[1][1]).is_const(1));
  EXPECT_TRUE(expr::simplify(out.g[0][0]).is_const(1));
}

// Joint feedback of the pendulum on a base: the residual (x1, v1) dynamics in
// closed form. The drift sign follows from the stated Lagrangian.
TEST(Transform, PendulumJointFeedbackClosedForms) {
  const auto c = load_case("double_pendulum_base.toml", "", "joints");
  const auto& s = c.system;
  const expr::ExprMatrix D{{s.g[0][1], s.g[1][1]}, {s.g[0][2], s.g[1][2]}};
  const auto Dinv = expr::inverse(D, expr::determinant(D));
  model::MechanicalTransformation t = model::MechanicalTransformation::identity(3, 2);
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        t.gamma[r][j][k] = Dinv[r][0] * s.christoffel(1, j, k) + Dinv[r][1] * s.christoffel(2, j, k);
    t.alpha[r] = -(Dinv[r][0] * s.e[1] + Dinv[r][1] * s.e[2]);
    t.beta[r] = Dinv[r];
  }
  const auto out = model::apply_transformation(s, t);
  auto form = [&](const std::string& text) { return c.parse_expressions({text})[0]; };
  EXPECT_TRUE(vanishes(out.christoffel(0, 0, 0) - form("-tan(x1)")));
  EXPECT_TRUE(vanishes(out.christoffel(0, 1, 1) - form("p1*sec(x1)*sin(x2)")));
  EXPECT_TRUE(vanishes(out.g[0][0] - form("p1*sec(x1)*cos(x2)")));
  EXPECT_TRUE(vanishes(out.g[1][0] - form("p2*sec(x1)")));
  EXPECT_TRUE(vanishes(out.e[0] + form("k/(l1*(m1+m2))*x3*sec(x1)")));
  for (int i = 1; i < 3; ++i) {
    EXPECT_TRUE(vanishes(out.e[i]));
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) EXPECT_TRUE(vanishes(out.christoffel(i, j, k)));
    EXPECT_TRUE(vanishes(out.g[i - 1][i] - Expr::constant(1)));
    EXPECT_TRUE(vanishes(out.g[2 - i][i]));
  }
}

TEST(Transform, FeedbackGroupInverse) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coef(-3, 3);
  for (const char* file : {"iwp.toml", "example1.toml"}) {
    const auto c = load_case(file, std::string(file) == "example1.toml" ? "rho22" : "");
    const auto& s = c.system;
    auto t = model::MechanicalTransformation::identity(s.n, s.m);
    for (int r = 0; r < s.m; ++r) {
      for (int j = 0; j < s.n; ++j)
        for (int k = j; k < s.n; ++k) {
          const Expr e = Expr::constant(coef(rng)) * expr::sin(Expr::var(j)) + Expr::constant(coef(rng));
          t.gamma[r][j][k] = e;
          t.gamma[r][k][j] = e;
        }
      t.alpha[r] = Expr::constant(coef(rng)) * Expr::var(0) * Expr::var(s.n - 1);
      t.beta[r][r] = Expr::constant(2) + expr::cos(Expr::var(0)) * Expr::constant(expr::Rational(1, 2));
    }
    const auto there = model::apply_transformation(s, t);
    const auto back = model::apply_transformation(there, model::inverse_feedback(t));
    EXPECT_TRUE(model::structurally_equal(back, s)) << file;
  }
}

TEST(Transform, SingularBetaRejectedAtPoint) {
  const auto c = load_case("iwp.toml");
  auto t = model::MechanicalTransformation::identity(2, 1);
  t.beta[0][0] = Expr::var(0);
  expr::Point p{{0.0, 0.0}, std::nullopt, c.system.params};
  EXPECT_THROW(model::apply_transformation(c.system, t, p), ConditionError);
}

TEST(SystemFile, ErrorsCarryLineNumbers) {
  try {
    parse_case("n = 2\nvars = [\"x1\", \"x2\"]\noutputs = [\"x1\"]\n[christoffel]\ne = [0, 0]\ng.1 = [1, 0]\nbogus = 3\n");
    FAIL() << "unknown key accepted";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("test.toml:7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(model::SystemDocument::parse("n = \n", "x"), InputError);
}

TEST(SystemFile, ValidationRejectsBadSystems) {
  // v-dependence is impossible to write (no velocity names); check the others.
  EXPECT_THROW(parse_case(R"(
n = 1
vars = ["x1"]
outputs = ["x1", "x1"]
[christoffel]
e = [0]
g.1 = [1]
g.2 = [2]
)"),
               InputError);
  EXPECT_THROW(parse_case(R"(
n = 2
vars = ["x1", "x2"]
outputs = ["x1"]
[christoffel]
e = [0]
g.1 = [1, 0]
)"),
               InputError);
}

TEST(SystemFile, RegimesAndOutputSets) {
  const auto doc = model::SystemDocument::load(corpus_file("example1.toml"));
  EXPECT_EQ(doc.regimes(), (std::vector<std::string>{"rho22", "rho23", "rho24"}));
  EXPECT_THROW(model::build_system(doc, "nope"), InputError);
  const auto iwp = model::SystemDocument::load(corpus_file("iwp.toml"));
  EXPECT_EQ(iwp.output_sets().size(), 3u);
  EXPECT_THROW(model::build_system(iwp, "", "nope"), InputError);
}

TEST(Point, ParsesAndChecksDimensions) {
  const auto c = load_case("iwp.toml");
  const auto p = model::parse_point("x=0.1, a/10; v=0,1", c.system);
  ASSERT_TRUE(p.v);
  EXPECT_DOUBLE_EQ(p.x[1], 0.981);
  EXPECT_THROW(model::parse_point("x=0.1", c.system), InputError);
  EXPECT_THROW(model::parse_point("x=0,0; w=1,1", c.system), InputError);
}

}  // namespace
