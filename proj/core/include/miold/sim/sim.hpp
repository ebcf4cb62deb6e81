#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "miold/synthesis/synthesis.hpp"

namespace miold::sim {

using model::MechanicalSystem;

/// Scalar input signal: a sum of elementary terms. Steps switch on at
/// t >= onset; sinusoids are amplitude * sin(2 pi frequency t); tables are
/// zero-order holds over (time, value) rows sorted by time.
class InputSignal {
 public:
  enum class Kind { Zero, Step, Sinusoid, Piecewise };

  struct Term {
    Kind kind = Kind::Zero;
    double amplitude = 0.0;
    double onset = 0.0;
    double frequency = 0.0;
    std::vector<std::pair<double, double>> table;
  };

  InputSignal() = default;
  static InputSignal zero() { return {}; }
  static InputSignal step(double amplitude, double onset);
  static InputSignal sinusoid(double amplitude, double frequency);
  static InputSignal piecewise(std::vector<std::pair<double, double>> table);

  double operator()(double t) const;
  const std::vector<Term>& terms() const { return terms_; }
  friend InputSignal operator+(InputSignal a, const InputSignal& b);

 private:
  std::vector<Term> terms_;
};

using InputVector = std::vector<InputSignal>;

struct Trajectory {
  enum class Status { Ok, DomainError, Diverged, SingularLocus };

  int n = 0;
  int m = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> x, v, u, y;
  Status status = Status::Ok;
  std::string message;
  /// Time of the abort when status != Ok.
  double abort_time = 0.0;

  bool ok() const { return status == Status::Ok; }
  std::size_t size() const { return times.size(); }
};

const char* to_string(Trajectory::Status status);

struct IntegrateOptions {
  double horizon = 1.0;
  double dt = 1e-4;
  /// Keep every k-th step in the trajectory (the last step is always kept).
  int record_every = 1;
  double divergence_bound = 1e9;
  /// Abort when sigma_min(D) < threshold * sigma_max(D).
  double singular_threshold = 1e-6;
};

/// Fixed-step RK4 on (x, v). Aborts (partial trajectory, status set) on
/// domain errors and divergence. Throws InputError on bad arguments.
Trajectory integrate(const MechanicalSystem& s, const expr::Point& start, const InputVector& u,
                     const IntegrateOptions& options = {});

struct ClosedLoopRun {
  Trajectory original;     // u holds the applied inputs
  Trajectory transformed;  // (x~, v~) = (phi(x), J v); u holds u~; y the chain heads
};

/// Integrates the system under u = D^-1 (-C - A + u~).
ClosedLoopRun closed_loop_run(const MechanicalSystem& s, const synthesis::FeedbackLaw& law,
                              const expr::Point& start, const InputVector& u_tilde,
                              const IntegrateOptions& options = {});

struct CertificateOptions {
  IntegrateOptions integrate;
  double step_amplitude = 1.0;
  double step_onset = 0.1;
  /// Second signal of the superposition test.
  double sine_amplitude = 0.5;
  double sine_frequency = 1.0;
  double cross_tolerance = 1e-7;
  double analytic_tolerance = 1e-5;
  double superposition_tolerance = 1e-6;
  bool parallel = true;
};

struct ChannelResult {
  int channel = 0;
  /// cross[i]: max_t |y_i(step on channel) - y_i(baseline)|, 0 at i = channel.
  std::vector<double> cross;
  double max_cross = 0.0;
  /// Own output against the 2 nu-integrator response.
  double analytic_deviation = 0.0;
  bool passed = false;
};

struct Certificate {
  std::vector<int> nu;
  double horizon = 0.0;
  double dt = 0.0;
  std::vector<ChannelResult> channels;
  /// Baseline (u~ = 0) outputs against the free chain responses.
  double baseline_deviation = 0.0;
  double superposition_deviation = 0.0;
  bool runs_ok = true;
  std::string failure;
  bool passed = false;

  Trajectory baseline;
  std::vector<Trajectory> stepped;
};

/// y(t) of a chain of 2 nu integrators from (x~, v~) entries at the chain
/// start, plus amplitude * (t - onset)_+^(2 nu) / (2 nu)!.
double chain_response(std::span<const double> xt0, std::span<const double> vt0, double t, double amplitude,
                      double onset);

/// Paired runs differing in one channel; cross-channel, analytic and
/// superposition checks. Runs execute concurrently when options.parallel.
Certificate decoupling_certificate(const MechanicalSystem& s, const synthesis::FeedbackLaw& law,
                                   const expr::Point& start, const CertificateOptions& options = {});

/// CSV with header t, x.., v.., u1.., y1..
void write_csv(std::ostream& out, const Trajectory& trajectory, const std::vector<std::string>& state_names);

}  // namespace miold::sim
