#include "miold/sim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <ostream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "miold/errors.hpp"
#include "miold/expr/program.hpp"

namespace miold::sim {

using expr::Expr;

InputSignal InputSignal::step(double amplitude, double onset) {
  InputSignal s;
  s.terms_.push_back({Kind::Step, amplitude, onset, 0.0, {}});
  return s;
}

InputSignal InputSignal::sinusoid(double amplitude, double frequency) {
  InputSignal s;
  s.terms_.push_back({Kind::Sinusoid, amplitude, 0.0, frequency, {}});
  return s;
}

InputSignal InputSignal::piecewise(std::vector<std::pair<double, double>> table) {
  if (!std::is_sorted(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.first < b.first; }))
    throw InputError("piecewise input table must be sorted by time");
  InputSignal s;
  s.terms_.push_back({Kind::Piecewise, 0.0, 0.0, 0.0, std::move(table)});
  return s;
}

double InputSignal::operator()(double t) const {
  double value = 0.0;
  for (const auto& term : terms_) {
    switch (term.kind) {
      case Kind::Zero:
        break;
      case Kind::Step:
        if (t >= term.onset) value += term.amplitude;
        break;
      case Kind::Sinusoid:
        value += term.amplitude * std::sin(2.0 * std::numbers::pi * term.frequency * t);
        break;
      case Kind::Piecewise: {
        auto it = std::upper_bound(term.table.begin(), term.table.end(), t,
                                   [](double x, const auto& row) { return x < row.first; });
        if (it != term.table.begin()) value += std::prev(it)->second;
        break;
      }
    }
  }
  return value;
}

InputSignal operator+(InputSignal a, const InputSignal& b) {
  a.terms_.insert(a.terms_.end(), b.terms_.begin(), b.terms_.end());
  return a;
}

const char* to_string(Trajectory::Status status) {
  switch (status) {
    case Trajectory::Status::Ok:
      return "ok";
    case Trajectory::Status::DomainError:
      return "domain error";
    case Trajectory::Status::Diverged:
      return "diverged";
    case Trajectory::Status::SingularLocus:
      return "hit singular locus";
  }
  return "?";
}

namespace {

struct SingularLocus {
  double ratio;
};

// f(t, z, dz, u): derivative and applied inputs; y(z, out): outputs.
using Field = std::function<void(double, std::span<const double>, std::span<double>, std::span<double>)>;
using OutputMap = std::function<void(std::span<const double>, std::span<double>)>;

Trajectory run_rk4(int n, int m, int outputs, std::vector<double> z, const Field& f, const OutputMap& y,
                   const IntegrateOptions& opt) {
  if (!(opt.dt > 0.0)) throw InputError("dt must be positive");
  if (!(opt.horizon >= 0.0)) throw InputError("horizon must be non-negative");
  if (opt.record_every < 1) throw InputError("record_every must be at least 1");
  Trajectory traj;
  traj.n = n;
  traj.m = m;
  const int dim = 2 * n;
  const long steps = opt.horizon > 0.0 ? static_cast<long>(std::ceil(opt.horizon / opt.dt - 1e-9)) : 0;
  // Inputs are sampled just inside each step so a step switching on at a
  // grid time acts on the following interval only.
  const double bias = 1e-9 * opt.dt;

  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim), u(m), yv(outputs);
  auto record = [&](double t) {
    f(t + bias, z, tmp, u);
    y(z, yv);
    traj.times.push_back(t);
    traj.x.emplace_back(z.begin(), z.begin() + n);
    traj.v.emplace_back(z.begin() + n, z.end());
    traj.u.push_back(u);
    traj.y.push_back(yv);
  };

  double t = 0.0;
  try {
    record(0.0);
    for (long k = 0; k < steps; ++k) {
      t = k * opt.dt;
      const double h = std::min(opt.dt, opt.horizon - t);
      f(t + bias, z, k1, u);
      for (int i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
      f(t + 0.5 * h, tmp, k2, u);
      for (int i = 0; i < dim; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
      f(t + 0.5 * h, tmp, k3, u);
      for (int i = 0; i < dim; ++i) tmp[i] = z[i] + h * k3[i];
      f(t + h - bias, tmp, k4, u);
      double norm = 0.0;
      for (int i = 0; i < dim; ++i) {
        z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        norm = std::max(norm, std::abs(z[i]));
      }
      const double t_next = k + 1 == steps ? opt.horizon : (k + 1) * opt.dt;
      if (!std::isfinite(norm) || norm > opt.divergence_bound) {
        traj.status = Trajectory::Status::Diverged;
        traj.abort_time = t_next;
        traj.message = fmt::format("state norm exceeded {:g} at t = {:.6g}", opt.divergence_bound, t_next);
        return traj;
      }
      if ((k + 1) % opt.record_every == 0 || k + 1 == steps) record(t_next);
    }
  } catch (const DomainError& err) {
    traj.status = Trajectory::Status::DomainError;
    traj.abort_time = t;
    traj.message = fmt::format("{} near t = {:.6g}", err.what(), t);
  } catch (const SingularLocus& s) {
    traj.status = Trajectory::Status::SingularLocus;
    traj.abort_time = t;
    traj.message = fmt::format("hit singular locus at t = {:.6g} (sigma_min/sigma_max = {:.3g})", t, s.ratio);
  }
  return traj;
}

std::vector<double> initial_state(const MechanicalSystem& s, const expr::Point& start) {
  if (static_cast<int>(start.x.size()) != s.n) throw InputError("start point has the wrong dimension");
  std::vector<double> z = start.x;
  if (start.v) {
    if (static_cast<int>(start.v->size()) != s.n) throw InputError("start velocity has the wrong dimension");
    z.insert(z.end(), start.v->begin(), start.v->end());
  } else {
    z.resize(2 * s.n, 0.0);
  }
  return z;
}

// drift (n), then g_r (m * n).
std::vector<Expr> vector_field_exprs(const MechanicalSystem& s) {
  if (s.chart) throw InputError("cannot simulate a charted system directly");
  std::vector<Expr> out = model::drift_acceleration(s);
  for (int r = 0; r < s.m; ++r) out.insert(out.end(), s.g[r].begin(), s.g[r].end());
  return out;
}

}  // namespace

Trajectory integrate(const MechanicalSystem& s, const expr::Point& start, const InputVector& u,
                     const IntegrateOptions& options) {
  if (static_cast<int>(u.size()) != s.m) throw InputError(fmt::format("expected {} input signals", s.m));
  const int n = s.n, m = s.m;
  const auto exprs = vector_field_exprs(s);
  const expr::Program field(exprs, s.params);
  const expr::Program out(s.h, s.params);
  auto f = [&, scratch = std::vector<double>(), vals = std::vector<double>(field.output_count())](
               double t, std::span<const double> z, std::span<double> dz, std::span<double> uv) mutable {
    field.run(z, vals, scratch);
    for (int r = 0; r < m; ++r) uv[r] = u[r](t);
    for (int i = 0; i < n; ++i) {
      double acc = vals[i];
      for (int r = 0; r < m; ++r) acc += vals[n + r * n + i] * uv[r];
      dz[i] = z[n + i];
      dz[n + i] = acc;
    }
  };
  auto y = [&, scratch = std::vector<double>()](std::span<const double> z, std::span<double> yv) mutable {
    out.run(z, yv, scratch);
  };
  return run_rk4(n, m, m, initial_state(s, start), f, y, options);
}

ClosedLoopRun closed_loop_run(const MechanicalSystem& s, const synthesis::FeedbackLaw& law,
                              const expr::Point& start, const InputVector& u_tilde, const IntegrateOptions& options) {
  const int n = s.n, m = s.m;
  if (static_cast<int>(u_tilde.size()) != m) throw InputError(fmt::format("expected {} input signals", m));
  if (law.n != n || law.m != m) throw InputError("feedback law does not match the system");

  // drift, g, A, D (row-major), v^T C_l v.
  std::vector<Expr> exprs = vector_field_exprs(s);
  exprs.insert(exprs.end(), law.A.begin(), law.A.end());
  for (const auto& row : law.D) exprs.insert(exprs.end(), row.begin(), row.end());
  for (int l = 0; l < m; ++l) {
    Expr q;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (!law.C[l][j][k].is_const(0)) q = q + law.C[l][j][k] * Expr::var(n + j) * Expr::var(n + k);
    exprs.push_back(q);
  }
  const expr::Program field(exprs, s.params);
  const expr::Program out(s.h, s.params);
  const int off_g = n, off_a = n + m * n, off_d = off_a + m, off_c = off_d + m * m;
  const double threshold = options.singular_threshold;

  // The scale is the larger of sigma_max(D) now and at the start, so a 1 x 1
  // D that decays toward zero is caught as well.
  double scale = 0.0;
  auto f = [&, scratch = std::vector<double>(), vals = std::vector<double>(field.output_count()),
            D = Eigen::MatrixXd(m, m), rhs = Eigen::VectorXd(m)](
               double t, std::span<const double> z, std::span<double> dz, std::span<double> uv) mutable {
    field.run(z, vals, scratch);
    for (int l = 0; l < m; ++l) {
      rhs(l) = u_tilde[l](t) - vals[off_c + l] - vals[off_a + l];
      for (int r = 0; r < m; ++r) D(l, r) = vals[off_d + l * m + r];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (scale == 0.0) scale = sv(0);
    const double ref = std::max(scale, sv(0));
    if (!(sv(m - 1) >= threshold * ref) || ref == 0.0) throw SingularLocus{ref > 0 ? sv(m - 1) / ref : 0.0};
    const Eigen::VectorXd sol = svd.solve(rhs);
    for (int r = 0; r < m; ++r) uv[r] = sol(r);
    for (int i = 0; i < n; ++i) {
      double acc = vals[i];
      for (int r = 0; r < m; ++r) acc += vals[off_g + r * n + i] * uv[r];
      dz[i] = z[n + i];
      dz[n + i] = acc;
    }
  };
  auto y = [&, scratch = std::vector<double>()](std::span<const double> z, std::span<double> yv) mutable {
    out.run(z, yv, scratch);
  };

  ClosedLoopRun run;
  run.original = run_rk4(n, m, m, initial_state(s, start), f, y, options);

  std::vector<Expr> chart = law.phi;
  for (const auto& row : law.jacobian) chart.insert(chart.end(), row.begin(), row.end());
  const expr::Program map(chart, s.params);
  Trajectory& tr = run.transformed;
  tr.n = n;
  tr.m = m;
  tr.status = run.original.status;
  tr.message = run.original.message;
  tr.abort_time = run.original.abort_time;
  std::vector<double> scratch, vals(map.output_count());
  const double bias = 1e-9 * options.dt;
  for (std::size_t k = 0; k < run.original.size(); ++k) {
    map.run(run.original.x[k], vals, scratch);
    std::vector<double> xt(vals.begin(), vals.begin() + n), vt(n, 0.0), ut(m), yt(m);
    for (int a = 0; a < n; ++a)
      for (int i = 0; i < n; ++i) vt[a] += vals[n + a * n + i] * run.original.v[k][i];
    const double t = run.original.times[k];
    for (int l = 0; l < m; ++l) {
      ut[l] = u_tilde[l](t + bias);
      yt[l] = xt[law.offsets[l]];
    }
    tr.times.push_back(t);
    tr.x.push_back(std::move(xt));
    tr.v.push_back(std::move(vt));
    tr.u.push_back(std::move(ut));
    tr.y.push_back(std::move(yt));
  }
  return run;
}

double chain_response(std::span<const double> xt0, std::span<const double> vt0, double t, double amplitude,
                      double onset) {
  const std::size_t nu = xt0.size();
  double y = 0.0, power = 1.0, factorial = 1.0;
  for (std::size_t l = 0; l < nu; ++l) {
    y += xt0[l] * power / factorial;
    power *= t;
    factorial *= static_cast<double>(2 * l + 1);
    y += vt0[l] * power / factorial;
    power *= t;
    factorial *= static_cast<double>(2 * l + 2);
  }
  if (amplitude != 0.0 && t > onset) y += amplitude * std::pow(t - onset, static_cast<double>(2 * nu)) / factorial;
  return y;
}

namespace {

double max_output_gap(const Trajectory& a, const Trajectory& b, int i) {
  double gap = 0.0;
  const std::size_t len = std::min(a.size(), b.size());
  for (std::size_t k = 0; k < len; ++k) gap = std::max(gap, std::abs(a.y[k][i] - b.y[k][i]));
  return gap;
}

}  // namespace

Certificate decoupling_certificate(const MechanicalSystem& s, const synthesis::FeedbackLaw& law,
                                   const expr::Point& start, const CertificateOptions& options) {
  const int m = s.m;
  Certificate cert;
  cert.nu = law.nu;
  cert.horizon = options.integrate.horizon;
  cert.dt = options.integrate.dt;

  const auto policy = options.parallel ? std::launch::async : std::launch::deferred;
  auto launch = [&](InputVector u) {
    return std::async(policy, [&s, &law, &start, &options, u = std::move(u)] {
      return closed_loop_run(s, law, start, u, options.integrate);
    });
  };
  const InputVector zero(m);
  auto base_f = launch(zero);
  // Per channel: step, sinusoid, and their sum for the superposition test.
  std::vector<std::future<ClosedLoopRun>> step_f, sine_f, both_f;
  for (int j = 0; j < m; ++j) {
    const auto step = InputSignal::step(options.step_amplitude, options.step_onset);
    const auto sine = InputSignal::sinusoid(options.sine_amplitude, options.sine_frequency);
    InputVector u(m), w(m), uw(m);
    u[j] = step;
    w[j] = sine;
    uw[j] = step + sine;
    step_f.push_back(launch(std::move(u)));
    sine_f.push_back(launch(std::move(w)));
    both_f.push_back(launch(std::move(uw)));
  }

  const ClosedLoopRun base = base_f.get();
  std::vector<ClosedLoopRun> stepped, sines, both;
  for (int j = 0; j < m; ++j) {
    stepped.push_back(step_f[j].get());
    sines.push_back(sine_f[j].get());
    both.push_back(both_f[j].get());
  }

  auto note = [&](const Trajectory& t, const std::string& label) {
    if (!t.ok() && cert.runs_ok) {
      cert.runs_ok = false;
      cert.failure = label + ": " + t.message;
    }
  };
  note(base.original, "baseline run");
  for (int j = 0; j < m; ++j) note(stepped[j].original, fmt::format("step run on channel {}", j + 1));
  for (int j = 0; j < m; ++j) {
    note(sines[j].original, fmt::format("sinusoid run on channel {}", j + 1));
    note(both[j].original, fmt::format("step plus sinusoid run on channel {}", j + 1));
  }

  // Free responses from the transformed start.
  const auto& x0 = base.transformed.x.front();
  const auto& v0 = base.transformed.v.front();
  auto chain_gap = [&](const Trajectory& t, int l, double amplitude) {
    const int off = law.offsets[l], nu = law.nu[l];
    const std::span<const double> xs(x0.data() + off, nu), vs(v0.data() + off, nu);
    double gap = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k)
      gap = std::max(gap, std::abs(t.y[k][l] - chain_response(xs, vs, t.times[k], amplitude, options.step_onset)));
    return gap;
  };
  for (int l = 0; l < m; ++l) cert.baseline_deviation = std::max(cert.baseline_deviation, chain_gap(base.original, l, 0.0));

  bool pass = cert.runs_ok && cert.baseline_deviation < options.analytic_tolerance;
  for (int j = 0; j < m; ++j) {
    ChannelResult ch;
    ch.channel = j;
    ch.cross.assign(m, 0.0);
    for (int i = 0; i < m; ++i) {
      if (i == j) continue;
      ch.cross[i] = max_output_gap(stepped[j].original, base.original, i);
      ch.max_cross = std::max(ch.max_cross, ch.cross[i]);
    }
    ch.analytic_deviation = chain_gap(stepped[j].original, j, options.step_amplitude);
    ch.passed = stepped[j].original.ok() && ch.max_cross < options.cross_tolerance &&
                ch.analytic_deviation < options.analytic_tolerance;
    pass = pass && ch.passed;
    cert.channels.push_back(std::move(ch));
  }

  for (int j = 0; j < m; ++j) {
    const Trajectory &y0 = base.original, &ya = stepped[j].original, &yb = sines[j].original,
                     &yab = both[j].original;
    const std::size_t len = std::min({y0.size(), ya.size(), yb.size(), yab.size()});
    for (std::size_t k = 0; k < len; ++k)
      for (int i = 0; i < m; ++i)
        cert.superposition_deviation = std::max(
            cert.superposition_deviation, std::abs(yab.y[k][i] - ya.y[k][i] - yb.y[k][i] + y0.y[k][i]));
  }
  pass = pass && cert.superposition_deviation < options.superposition_tolerance;
  if (cert.failure.empty() && !pass) {
    if (cert.baseline_deviation >= options.analytic_tolerance)
      cert.failure = fmt::format("free response deviates from the chain response by {:.3g}", cert.baseline_deviation);
    for (const auto& ch : cert.channels)
      if (!ch.passed && cert.failure.empty())
        cert.failure = fmt::format("channel {}: cross deviation {:.3g}, analytic deviation {:.3g}", ch.channel + 1,
                                   ch.max_cross, ch.analytic_deviation);
    if (cert.failure.empty())
      cert.failure = fmt::format("superposition deviation {:.3g}", cert.superposition_deviation);
  }
  cert.passed = pass;
  cert.baseline = base.original;
  for (auto& r : stepped) cert.stepped.push_back(std::move(r.original));
  return cert;
}

void write_csv(std::ostream& out, const Trajectory& trajectory, const std::vector<std::string>& state_names) {
  const int n = trajectory.n, m = trajectory.m;
  out << "t";
  for (int i = 0; i < 2 * n; ++i) out << "," << state_names.at(i);
  for (int r = 0; r < m; ++r) out << ",u" << r + 1;
  const int outputs = trajectory.y.empty() ? m : static_cast<int>(trajectory.y.front().size());
  for (int l = 0; l < outputs; ++l) out << ",y" << l + 1;
  out << "\n";
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    out << fmt::format("{:.17g}", trajectory.times[k]);
    for (double x : trajectory.x[k]) out << fmt::format(",{:.17g}", x);
    for (double v : trajectory.v[k]) out << fmt::format(",{:.17g}", v);
    for (double u : trajectory.u[k]) out << fmt::format(",{:.17g}", u);
    for (double y : trajectory.y[k]) out << fmt::format(",{:.17g}", y);
    out << "\n";
  }
}

}  // namespace miold::sim
