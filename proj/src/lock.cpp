#include "tbell/lock.hpp"

#include "tbell/analysis.hpp"
#include "tbell/error.hpp"

#include <algorithm>
#include <cmath>

namespace tbell::lock {

void DriftModel::validate() const {
  if (!(time_constant > 0.0)) throw ConfigError("drift.time_constant", "must be positive");
  if (!std::isfinite(magnitude)) throw ConfigError("drift.magnitude", "must be finite");
}

Drift::Drift(const DriftModel& model, std::uint64_t seed) : model_(model), rng_(seed, mix_stream(0xD81F7, 0)) {
  model_.validate();
}

double Drift::advance(double t, double dt) {
  switch (model_.process) {
    case DriftProcess::RandomWalk:
      value_ += model_.magnitude * std::sqrt(dt / model_.time_constant) * rng_.normal();
      return value_;
    case DriftProcess::Sinusoidal:
      return model_.magnitude * std::sin(2.0 * qcore::kPi * t / model_.time_constant);
    case DriftProcess::Step:
      return t >= model_.step_time ? model_.magnitude : 0.0;
  }
  return 0.0;
}

double pid_step(PidState& s, const PidGains& g, double error, double dt) {
  if (!(dt > 0.0)) throw DomainError("pid_step needs dt > 0");
  s.integrator = std::clamp(s.integrator + error * dt, -g.integrator_limit, g.integrator_limit);
  const double derivative = s.primed ? (error - s.last_error) / dt : 0.0;
  s.last_error = error;
  s.primed = true;
  return g.kp * error + g.ki * s.integrator + g.kd * derivative;
}

double extinction_ratio(std::uint64_t n_c, std::uint64_t n_l) {
  const std::uint64_t total = n_c + n_l;
  if (total == 0) throw DomainError("extinction ratio undefined without counts");
  return (static_cast<double>(n_c) - static_cast<double>(n_l)) / static_cast<double>(total);
}

void BranchEstimator::observe(double bias, std::uint64_t n_c, std::uint64_t n_l) {
  ++observations_;
  const double total = static_cast<double>(n_c + n_l);
  if (total == 0.0) return;
  const double r = extinction_ratio(n_c, n_l);
  // Shot-noise sigma of R, floored at one count.
  const double sigma_r =
      std::max(2.0 * std::sqrt(static_cast<double>(n_c) * static_cast<double>(n_l) / total) / total, 1.0 / total);

  if (last_bias_) {
    const double d_bias = bias - *last_bias_;
    const double d_r = r - last_r_;
    if (d_bias != 0.0 && std::abs(d_r) > gate_ * std::sqrt(2.0) * sigma_r) {
      const int estimate = ((d_r > 0.0) == (d_bias > 0.0) ? 1 : -1) * gain_sign_;
      if (!decided_) {
        sign_ = estimate;
        decided_ = true;
        pending_ = 0;
      } else if (estimate == sign_) {
        pending_ = 0;
      } else if (pending_ == estimate) {
        sign_ = estimate;
        pending_ = 0;
      } else {
        pending_ = estimate;
      }
    }
  }
  last_bias_ = bias;
  last_r_ = r;
}

double error_signal(int branch_sign, std::uint64_t n_c, std::uint64_t n_l, double limit) {
  const double s = branch_sign >= 0 ? 1.0 : -1.0;
  if (n_c == 0) return s * limit;
  return s * std::min(static_cast<double>(n_l) / static_cast<double>(n_c), limit);
}

void LockConfig::validate() const {
  if (!(interval > 0.0)) throw ConfigError("lock.interval", "must be positive");
  if (!(counts_per_interval > 0.0)) throw ConfigError("lock.counts_per_interval", "must be positive");
  if (volts_to_radians == 0.0 || !std::isfinite(volts_to_radians)) {
    throw ConfigError("lock.volts_to_radians", "must be finite and nonzero");
  }
  if (!(duration > 0.0)) throw ConfigError("lock.duration", "must be positive");
  if (!(error_limit > 0.0)) throw ConfigError("lock.error_limit", "must be positive");
  if (!(gains.integrator_limit > 0.0)) throw ConfigError("lock.gains.integrator_limit", "must be positive");
  if (!(settle_time >= 0.0)) throw ConfigError("lock.settle_time", "must be nonnegative");
  sim.validate();
  const double detected_fraction = sim.efficiency[eventsim::kAlicePlus] * 0.5;
  if (!(detected_fraction > 0.0)) throw ConfigError("lock.sim.efficiency", "locked detector must see photons");
  if (counts_per_interval / (interval * sim.rep_rate * detected_fraction) > 1.0) {
    throw ConfigError("lock.counts_per_interval", "exceeds one pair per pulse");
  }
}

double phase_error(double phi) {
  const double two_pi = 2.0 * qcore::kPi;
  const double d = std::fmod(phi - qcore::kPi, two_pi);
  const double w = d < 0.0 ? d + two_pi : d;  // [0, 2 pi)
  return std::min(w, two_pi - w);
}

LockTrace closed_loop_sim(const LockConfig& cfg, const DriftModel& drift_model) {
  cfg.validate();
  drift_model.validate();

  Drift drift(drift_model, cfg.sim.seed);
  LockState state{{}, BranchEstimator(cfg.sign_gate, cfg.volts_to_radians), 0.0, 0, 0};

  eventsim::SimConfig sim = cfg.sim;
  sim.duration = cfg.interval;
  sim.pair_prob = cfg.counts_per_interval / (cfg.interval * sim.rep_rate * sim.efficiency[eventsim::kAlicePlus] * 0.5);

  optics::OpticalLayout layout;
  layout.scheme = qcore::Scheme::ActiveSwitch;
  layout.delta_t = sim.delta_t;

  const auto steps = static_cast<std::size_t>(std::floor(cfg.duration / cfg.interval + 1e-9));
  LockTrace trace;
  trace.points.reserve(steps);
  double sum_sq = 0.0;
  std::size_t n_steady = 0;

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.interval;
    const double dither_volts = (k % 2 == 0 ? 1.0 : -1.0) * cfg.dither / cfg.volts_to_radians;
    const double applied = state.bias + dither_volts;
    const double phi = cfg.initial_phase + drift.advance(t, cfg.interval) + cfg.volts_to_radians * applied;

    layout.switch_a = phi;
    sim.seed = mix_stream(cfg.sim.seed, k + 1);
    const auto events = eventsim::run_simulation(sim, layout);
    const auto counts =
        analysis::slot_counts(events.alice, events.clock, sim.delta_t / 2.0, std::uint8_t{eventsim::kAlicePlus});
    state.n_c = counts.central;
    state.n_l = counts.lateral();

    state.branch.observe(applied, state.n_c, state.n_l);
    const double error = error_signal(state.branch.sign(), state.n_c, state.n_l, cfg.error_limit);
    state.bias = pid_step(state.pid, cfg.gains, error, 1.0);

    const double ratio = state.n_c + state.n_l > 0 ? extinction_ratio(state.n_c, state.n_l) : 0.0;
    trace.points.push_back({t, phi, ratio, applied, state.n_c, state.n_l});
    if (t >= cfg.settle_time) {
      const double e = phase_error(phi);
      sum_sq += e * e;
      trace.residual_max = std::max(trace.residual_max, e);
      ++n_steady;
    }
  }
  trace.residual_rms = n_steady > 0 ? std::sqrt(sum_sq / static_cast<double>(n_steady)) : 0.0;
  trace.locked = n_steady > 0 && trace.residual_rms < cfg.lock_threshold;
  return trace;
}

double effective_visibility(double visibility, double switch_a, double switch_b) {
  const double sa = std::sin(switch_a / 2.0);
  const double sb = std::sin(switch_b / 2.0);
  return visibility * sa * sa * sb * sb;
}

}  // namespace tbell::lock
