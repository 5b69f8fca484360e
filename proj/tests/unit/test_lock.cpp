#include "tbell/analysis.hpp"
#include "tbell/error.hpp"
#include "tbell/lock.hpp"

#include <doctest.h>

#include <cmath>

using namespace tbell;
using namespace tbell::lock;
using qcore::kPi;

namespace {

// Short, cheaper loop for unit tests; the defaults are exercised in acceptance.
LockConfig quick_config(double duration) {
  LockConfig c;
  c.duration = duration;
  c.settle_time = 0.0;
  return c;
}

DriftModel no_drift() {
  DriftModel d;
  d.magnitude = 0.0;
  return d;
}

double tail_rms(const LockTrace& tr, double from) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& p : tr.points) {
    if (p.t < from) continue;
    s += phase_error(p.phi_true) * phase_error(p.phi_true);
    ++n;
  }
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

TEST_SUITE("lock") {
  TEST_CASE("extinction ratio examples") {
    CHECK(extinction_ratio(10, 0) == doctest::Approx(1.0));
    CHECK(extinction_ratio(7, 7) == doctest::Approx(0.0));
    CHECK(extinction_ratio(3, 1) == doctest::Approx(0.5));
    CHECK(extinction_ratio(0, 4) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(extinction_ratio(0, 0), DomainError);
  }

  TEST_CASE("error signal examples") {
    CHECK(error_signal(1, 1000, 0) == 0.0);
    CHECK(error_signal(-1, 1000, 0) == 0.0);
    // phi_S = pi/2: histogram weights (1/4, 1/2, 1/4) give N_l = N_c
    const auto h = optics::detector_histogram(
        [] {
          optics::OpticalLayout l;
          l.scheme = qcore::Scheme::ActiveSwitch;
          l.switch_a = kPi / 2;
          return l;
        }(),
        optics::Party::Alice);
    const auto n_c = static_cast<std::uint64_t>(std::llround(1e4 * h[1]));
    const auto n_l = static_cast<std::uint64_t>(std::llround(1e4 * (h[0] + h[2])));
    CHECK(std::abs(error_signal(1, n_c, n_l)) == doctest::Approx(1.0));
    CHECK(error_signal(-1, n_c, n_l) == doctest::Approx(-1.0));
    CHECK(error_signal(1, 0, 5) == doctest::Approx(4.0));
    CHECK(error_signal(-1, 0, 5, 2.0) == doctest::Approx(-2.0));
    CHECK(error_signal(1, 1, 100) == doctest::Approx(4.0));
  }

  TEST_CASE("error vanishes exactly when lateral counts vanish") {
    for (std::uint64_t n_l : {0ull, 1ull, 10ull})
      for (int s : {-1, 1}) CHECK((error_signal(s, 500, n_l) == 0.0) == (n_l == 0));
  }

  TEST_CASE("pid examples") {
    PidState s;
    const PidGains pure_p{1.0, 0.0, 0.0, 50.0};
    CHECK(pid_step(s, pure_p, 0.1, 1.0) == doctest::Approx(0.1));
    CHECK(pid_step(s, pure_p, -0.1, 1.0) == doctest::Approx(-0.1));

    // Persistent zero error holds the bias set by the integrator.
    PidState pi;
    const PidGains g;
    pid_step(pi, g, 0.3, 1.0);
    const double held = pid_step(pi, g, 0.0, 1.0);
    for (int k = 0; k < 5; ++k) CHECK(pid_step(pi, g, 0.0, 1.0) == doctest::Approx(held));

    PidState wind;
    const PidGains clamp{0.0, 1.0, 0.0, 2.0};
    for (int k = 0; k < 100; ++k) pid_step(wind, clamp, 1.0, 1.0);
    CHECK(wind.integrator == doctest::Approx(2.0));

    PidState d;
    const PidGains pure_d{0.0, 0.0, 1.0, 50.0};
    CHECK(pid_step(d, pure_d, 0.5, 1.0) == 0.0);  // no derivative on the first step
    CHECK(pid_step(d, pure_d, 0.7, 0.5) == doctest::Approx(0.4));
    CHECK_THROWS_AS(pid_step(d, pure_d, 0.7, 0.0), DomainError);
  }

  TEST_CASE("branch estimator sign and hysteresis") {
    BranchEstimator b;
    CHECK(b.sign() == 1);
    // Below pi a positive bias move raises R: positive branch.
    b.observe(0.00, 900, 100);
    b.observe(0.01, 950, 50);
    CHECK(b.sign() == 1);
    // One contrary interval is not enough.
    b.observe(0.02, 900, 100);
    CHECK(b.sign() == 1);
    b.observe(0.03, 850, 150);
    CHECK(b.sign() == -1);
    // A move inside the shot-noise gate is ignored.
    b.observe(0.04, 851, 149);
    CHECK(b.sign() == -1);
    CHECK(b.history() == 5);

    BranchEstimator first;
    first.observe(0.0, 950, 50);
    first.observe(0.01, 900, 100);
    CHECK(first.sign() == -1);  // the first decision is taken at once

    BranchEstimator inverted(2.0, -1.0);
    inverted.observe(0.00, 900, 100);
    inverted.observe(0.01, 950, 50);
    CHECK(inverted.sign() == -1);
  }

  TEST_CASE("branch sign agrees with the histogram slope") {
    // Finite difference of the ideal central weight around the lock point.
    auto central = [](double phi) {
      optics::OpticalLayout l;
      l.scheme = qcore::Scheme::ActiveSwitch;
      l.switch_a = phi;
      return optics::detector_histogram(l, optics::Party::Alice)[1];
    };
    for (double phi : {kPi - 0.3, kPi + 0.3}) {
      BranchEstimator b;
      for (double bias : {0.0, 0.02}) {
        const double w = central(phi + bias);
        b.observe(bias, static_cast<std::uint64_t>(1e6 * w), static_cast<std::uint64_t>(1e6 * (1 - w)));
      }
      CHECK(b.sign() == (phi < kPi ? 1 : -1));
    }
  }

  TEST_CASE("drift processes") {
    DriftModel step{DriftProcess::Step, 0.3, 30.0, 10.0};
    Drift d(step, 1);
    CHECK(d.advance(0.0, 0.5) == 0.0);
    CHECK(d.advance(9.5, 0.5) == 0.0);
    CHECK(d.advance(10.0, 0.5) == doctest::Approx(0.3));

    DriftModel sine{DriftProcess::Sinusoidal, 0.2, 40.0, 0.0};
    Drift s(sine, 1);
    CHECK(s.advance(10.0, 0.5) == doctest::Approx(0.2));

    // Random walk: variance after time T is magnitude^2 T / tau.
    const DriftModel rw;
    double s2 = 0.0;
    const int walks = 2000;
    for (int w = 0; w < walks; ++w) {
      Drift r(rw, static_cast<std::uint64_t>(w));
      double v = 0.0;
      for (int k = 0; k < 60; ++k) v = r.advance(0.5 * k, 0.5);
      s2 += v * v;
    }
    const double expect = rw.magnitude * rw.magnitude * 30.0 / rw.time_constant;
    CHECK(std::abs(s2 / walks - expect) < 5.0 * expect * std::sqrt(2.0 / walks));

    CHECK_THROWS_AS((Drift(DriftModel{DriftProcess::RandomWalk, 0.1, 0.0, 0.0}, 1)), ConfigError);
  }

  TEST_CASE("config validation") {
    LockConfig c;
    CHECK_NOTHROW(c.validate());
    c.interval = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LockConfig{};
    c.counts_per_interval = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LockConfig{};
    c.counts_per_interval = 1e9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LockConfig{};
    c.volts_to_radians = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("phase error folding") {
    CHECK(phase_error(kPi) == doctest::Approx(0.0));
    CHECK(phase_error(kPi - 0.2) == doctest::Approx(0.2));
    CHECK(phase_error(3 * kPi + 0.1) == doctest::Approx(0.1));
    CHECK(phase_error(0.0) == doctest::Approx(kPi));
  }

  TEST_CASE("zero drift at lock stays under the shot-noise floor") {
    auto c = quick_config(60.0);
    const auto tr = closed_loop_sim(c, no_drift());
    const double floor = 2.0 * std::sqrt(9.0 / c.counts_per_interval);
    for (const auto& p : tr.points) CHECK(phase_error(p.phi_true) < floor);
    CHECK(tr.locked);
  }

  TEST_CASE("step drift of 0.3 rad is cancelled within five time constants") {
    auto c = quick_config(150.0);
    DriftModel step{DriftProcess::Step, 0.3, 30.0, 5.0};
    const auto tr = closed_loop_sim(c, step);
    CHECK(phase_error(tr.points[12].phi_true) > 0.2);  // the step was seen
    CHECK(tail_rms(tr, 120.0) < 0.05);
    // The bias ends up cancelling the step.
    double bias = 0.0;
    int n = 0;
    for (const auto& p : tr.points)
      if (p.t >= 120.0) {
        bias += p.bias;
        ++n;
      }
    CHECK(std::abs(c.volts_to_radians * bias / n + 0.3) < 0.05);
  }

  TEST_CASE("loop converges to pi from either side") {
    for (double start : {0.05, 0.6, 1.5, 2.6, 3.3, 3.7, 4.2, 4.8, 5.7, 6.2}) {
      CAPTURE(start);
      auto c = quick_config(60.0);
      c.initial_phase = start;
      c.counts_per_interval = 5e3;
      const auto tr = closed_loop_sim(c, no_drift());
      CHECK(tail_rms(tr, 40.0) < 0.1);
    }
  }

  TEST_CASE("trace is deterministic for a seed") {
    auto c = quick_config(5.0);
    const auto a = closed_loop_sim(c, DriftModel{});
    const auto b = closed_loop_sim(c, DriftModel{});
    REQUIRE(a.points.size() == 10);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].n_c == b.points[i].n_c);
      CHECK(a.points[i].bias == b.points[i].bias);
    }
    c.sim.seed = 9;
    const auto d = closed_loop_sim(c, DriftModel{});
    CHECK(d.points[0].n_c != a.points[0].n_c);
  }

  TEST_CASE("effective visibility law") {
    CHECK(effective_visibility(0.9, kPi, kPi) == doctest::Approx(0.9));
    CHECK(effective_visibility(1.0, kPi / 2, kPi) == doctest::Approx(0.5));
    CHECK(effective_visibility(1.0, 0.0, kPi) == doctest::Approx(0.0));

    // Simulated scan with fixed switch offsets, all-slot coincidences.
    eventsim::SimConfig sim;
    sim.pair_prob = 0.05;
    optics::OpticalLayout l;
    l.scheme = qcore::Scheme::ActiveSwitch;
    l.visibility = 0.9;
    l.switch_a = kPi - 0.5;
    l.switch_b = kPi + 0.35;
    const std::size_t n = 16;
    std::vector<eventsim::SettingEntry> entries;
    for (std::size_t k = 0; k < n; ++k) entries.push_back({0.0, 2.0 * kPi * k / n, 0.02});
    const auto sched = eventsim::schedule_settings(entries, sim.rep_rate);
    const auto out = eventsim::run_simulation(sim, l, sched);
    const auto runs = analysis::tally(
        analysis::find_coincidences(out.alice, out.bob, out.clock, analysis::CoincidencePolicy::all_slots(), &sched),
        n);
    std::vector<analysis::ScanPoint> scan;
    for (std::size_t k = 0; k < n; ++k) scan.push_back({entries[k].phi_b, static_cast<double>(runs[k].pp)});
    const auto fit = analysis::fit_visibility(scan);
    const double expect = effective_visibility(0.9, l.switch_a, l.switch_b);
    CHECK(std::abs(fit.visibility.value - expect) < 3.0 * fit.visibility.sigma);
  }
}
