#pragma once

// Closed-loop simulation of the switch-phase lock.
//
// The controller sees only one detector's histogram: N_c counts in the central
// peak and N_l in the two lateral peaks. It drives the modulator bias so that
// phi_S sits at pi, where the lateral peaks vanish. Because the histogram is
// symmetric under phi_S -> 2 pi - phi_S, the side of pi is inferred from the
// sign of dR/dphi_S, measured by dithering the bias between intervals.

#include "tbell/eventsim.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace tbell::lock {

enum class DriftProcess { RandomWalk, Sinusoidal, Step };

struct DriftModel {
  DriftProcess process = DriftProcess::RandomWalk;
  double magnitude = 0.03;     ///< [rad]; RW: rms change over one time constant
  double time_constant = 30.0; ///< [s]; RW correlation scale, sine period
  double step_time = 0.0;      ///< Step only: drift jumps to `magnitude` here

  void validate() const;
  friend bool operator==(const DriftModel&, const DriftModel&) = default;
};

/// Stateful drift realization; advance() is called once per control interval.
class Drift {
 public:
  Drift(const DriftModel& model, std::uint64_t seed);
  double advance(double t, double dt);

 private:
  DriftModel model_;
  Philox rng_;
  double value_ = 0.0;
};

struct PidGains {
  double kp = 0.5;
  double ki = 0.1;
  double kd = 0.0;
  double integrator_limit = 50.0;  ///< anti-windup clamp on the accumulated error

  friend bool operator==(const PidGains&, const PidGains&) = default;
};

/// PID accumulators. Time is measured in control intervals.
struct PidState {
  double integrator = 0.0;
  double last_error = 0.0;
  bool primed = false;
};

/// Bias [V] = kp e + ki I + kd de/dt with I clamped to +-integrator_limit.
double pid_step(PidState& state, const PidGains& gains, double error, double dt);

/// R = (N_c - N_l) / (N_c + N_l). Throws DomainError if both are zero.
double extinction_ratio(std::uint64_t n_c, std::uint64_t n_l);

/// Estimates sgn(dR/dphi_S) from consecutive (bias, R) pairs. A reversal of
/// the estimate must be seen on two consecutive intervals before it is taken.
/// Moves whose |dR| is within `gate` shot-noise sigmas are ignored.
class BranchEstimator {
 public:
  explicit BranchEstimator(double gate = 2.0, double volts_to_radians = 1.0)
      : gate_(gate), gain_sign_(volts_to_radians >= 0.0 ? 1 : -1) {}

  void observe(double bias, std::uint64_t n_c, std::uint64_t n_l);
  int sign() const noexcept { return sign_; }
  std::size_t history() const noexcept { return observations_; }

 private:
  double gate_;
  int gain_sign_;
  int sign_ = 1;
  int pending_ = 0;
  bool decided_ = false;
  std::size_t observations_ = 0;
  std::optional<double> last_bias_;
  double last_r_ = 0.0;
};

/// sgn(dR/dphi_S) * N_l / N_c, clamped to +-limit. N_c = 0 saturates at the limit.
double error_signal(int branch_sign, std::uint64_t n_c, std::uint64_t n_l, double limit = 4.0);

struct LockState {
  PidState pid;
  BranchEstimator branch;
  double bias = 0.0;
  std::uint64_t n_c = 0;
  std::uint64_t n_l = 0;
};

struct LockConfig {
  PidGains gains;
  double interval = 0.5;            ///< control interval [s]
  double volts_to_radians = 10.0;   ///< modulator bias gain [rad/V]
  double dither = 0.02;             ///< alternating bias offset [rad]
  double counts_per_interval = 2e4; ///< mean counts in the locked detector
  double error_limit = 0.15;        ///< clamp on the error; bounds the proportional step far from lock
  double sign_gate = 2.0;
  double initial_phase = qcore::kPi;  ///< phi_S at zero bias and zero drift
  double duration = 600.0;
  double settle_time = 60.0;          ///< excluded from the residual summary
  double lock_threshold = 0.05;       ///< [rad] rms residual defining "locked"
  eventsim::SimConfig sim;            ///< timing and detector model for count collection

  void validate() const;
  friend bool operator==(const LockConfig&, const LockConfig&) = default;
};

struct TracePoint {
  double t = 0.0;
  double phi_true = 0.0;
  double ratio = 0.0;
  double bias = 0.0;
  std::uint64_t n_c = 0;
  std::uint64_t n_l = 0;
};

struct LockTrace {
  std::vector<TracePoint> points;
  double residual_rms = 0.0;  ///< rms |phi_S - pi| after settle_time
  double residual_max = 0.0;
  bool locked = false;
};

/// |phi - pi| folded into [0, pi].
double phase_error(double phi);

/// Alternates event-level count collection on Alice's + detector with PID
/// updates. Deterministic given config.sim.seed.
LockTrace closed_loop_sim(const LockConfig& config, const DriftModel& drift);

/// Visibility left after imperfect locks: V sin^2(phi_A/2) sin^2(phi_B/2).
double effective_visibility(double visibility, double switch_a, double switch_b);

}  // namespace tbell::lock
