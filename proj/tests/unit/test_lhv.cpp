#include "tbell/analysis.hpp"
#include "tbell/error.hpp"
#include "tbell/lhv.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>

using namespace tbell;
using namespace tbell::lhv;
using optics::TimeBin;
using qcore::Outcome;

namespace {

Response random_row(Philox& rng, bool deterministic) {
  Response r;
  if (deterministic) {
    r.p = {0, 0, 0, 0};
    r.p[static_cast<std::size_t>(rng.uniform() * 4.0)] = 1.0;
    return r;
  }
  double sum = 0.0;
  for (auto& v : r.p) sum += (v = -std::log(1.0 - rng.uniform()));
  for (auto& v : r.p) v /= sum;
  return r;
}

LocalStrategy random_strategy(Philox& rng, std::size_t n_lambda, bool deterministic) {
  LocalStrategy s(n_lambda);
  std::vector<double> w(n_lambda);
  double sum = 0.0;
  for (auto& v : w) sum += (v = 0.05 + rng.uniform());
  for (auto& v : w) v /= sum;
  s.set_weights(w);
  for (std::size_t l = 0; l < n_lambda; ++l)
    for (std::size_t x = 0; x < 2; ++x) {
      s.alice(l, x) = random_row(rng, deterministic);
      s.bob(l, x) = random_row(rng, deterministic);
    }
  return s;
}

struct OracleStats {
  double keep = 0.0;
  double e_post = 0.0;
  double e_full = 0.0;
};

// Expands every stochastic row into its deterministic branches and sums
// over the resulting product distribution, one setting pair at a time.
OracleStats oracle(const LocalStrategy& s, std::size_t x, std::size_t y) {
  OracleStats o;
  double kept_ab = 0.0;
  for (std::size_t l = 0; l < s.n_lambda(); ++l) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        const double p = s.weights()[l] * s.alice(l, x).p[i] * s.bob(l, y).p[j];
        const double ab = (i % 2 == 0 ? 1.0 : -1.0) * (j % 2 == 0 ? 1.0 : -1.0);
        o.e_full += p * ab;
        if (i / 2 == j / 2) {
          o.keep += p;
          kept_ab += p * ab;
        }
      }
    }
  }
  o.e_post = o.keep > 0.0 ? kept_ab / o.keep : 0.0;
  return o;
}

eventsim::SimConfig pipeline_config() {
  eventsim::SimConfig c;
  c.pair_prob = 0.05;
  return c;
}

// Slot-blind window one slot narrower than the jitter can bridge.
analysis::CoincidencePolicy equal_slot_window(const eventsim::SimConfig& c) {
  return {c.delta_t - 5.0 * std::sqrt(2.0) * c.jitter_sigma, analysis::CoincidenceMode::WindowOnly};
}

analysis::BellRunResult run_pipeline(const LocalStrategy& s, const eventsim::SimConfig& c,
                                     const analysis::CoincidencePolicy& policy, double duration) {
  const auto sched = chsh_schedule(duration, c.rep_rate);
  const auto out = simulate_attack(s, c, sched);
  return analysis::estimate_chsh(
      analysis::tally(analysis::find_coincidences(out.alice, out.bob, out.clock, policy, &sched), 4));
}

}  // namespace

TEST_SUITE("lhv") {
  TEST_CASE("attack strategy table") {
    const auto s = attack_strategy();
    REQUIRE(s.n_lambda() == 2);
    CHECK(s.weights()[0] == doctest::Approx(0.5));
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(s.alice(l, 0) == Response::deterministic(TimeBin::S, Outcome::Plus));
      CHECK(s.alice(l, 1) == Response::deterministic(TimeBin::L, Outcome::Plus));
    }
    CHECK(s.bob(0, 0) == Response::deterministic(TimeBin::S, Outcome::Plus));
    CHECK(s.bob(0, 1) == Response::deterministic(TimeBin::L, Outcome::Minus));
    CHECK(s.bob(1, 0) == Response::deterministic(TimeBin::L, Outcome::Plus));
    CHECK(s.bob(1, 1) == Response::deterministic(TimeBin::S, Outcome::Plus));
  }

  TEST_CASE("attack strategy reaches S = 4 after postselection and 2 without") {
    const auto r = evaluate(attack_strategy());
    const std::array<double, 4> expect{1.0, 1.0, 1.0, -1.0};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& p = r.pairs[kChshPairs[k][0]][kChshPairs[k][1]];
      CHECK(p.postselected_correlation == doctest::Approx(expect[k]));
      CHECK(p.keep_rate == doctest::Approx(0.5));
    }
    CHECK(r.s_postselected == doctest::Approx(4.0));
    CHECK(r.s_full == doctest::Approx(2.0));
    CHECK(r.s == doctest::Approx(4.0));
    CHECK(evaluate(attack_strategy(), false).s == doctest::Approx(2.0));
  }

  TEST_CASE("kept marginals do not signal") {
    const auto r = evaluate(attack_strategy());
    for (std::size_t x = 0; x < 2; ++x)
      CHECK(r.pairs[x][0].alice_marginal_kept == doctest::Approx(r.pairs[x][1].alice_marginal_kept));
  }

  TEST_CASE("locality is structural") {
    Philox rng(11, 0);
    auto s = random_strategy(rng, 3, false);
    auto alice_mean = [&] {
      double m = 0.0;
      for (std::size_t l = 0; l < 3; ++l) {
        const auto& r = s.alice(l, 0);
        m += s.weights()[l] * (r.p[0] + r.p[2] - r.p[1] - r.p[3]);
      }
      return m;
    };
    const auto before = evaluate(s, false);
    const double mean_before = alice_mean();
    const auto row = s.alice(1, 0);
    s.bob(1, 0) = Response::deterministic(TimeBin::L, Outcome::Minus);
    s.bob(2, 1) = Response::deterministic(TimeBin::S, Outcome::Plus);
    CHECK(s.alice(1, 0) == row);
    CHECK(alice_mean() == mean_before);
    CHECK(evaluate(s, false).s_full != doctest::Approx(before.s_full));
  }

  TEST_CASE("evaluate agrees with the branch-expansion oracle") {
    Philox rng(12, 0);
    for (int trial = 0; trial < 50; ++trial) {
      const auto s = random_strategy(rng, 1 + trial % 4, trial % 3 == 0);
      const auto r = evaluate(s);
      double s_post = 0.0, s_full = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const auto [x, y] = kChshPairs[k];
        const auto o = oracle(s, x, y);
        const auto& p = r.pairs[x][y];
        CHECK(std::abs(p.keep_rate - o.keep) < 1e-12);
        CHECK(std::abs(p.postselected_correlation - o.e_post) < 1e-12);
        CHECK(std::abs(p.full_correlation - o.e_full) < 1e-12);
        const double sign = k == 3 ? -1.0 : 1.0;
        s_post += sign * o.e_post;
        s_full += sign * o.e_full;
      }
      CHECK(std::abs(r.s_postselected - s_post) < 1e-12);
      CHECK(std::abs(r.s_full - s_full) < 1e-12);
    }
  }

  TEST_CASE("full-statistics CHSH never exceeds 2") {
    Philox rng(13, 0);
    double worst = -10.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto s = random_strategy(rng, 1 + trial % 6, trial % 2 == 0);
      worst = std::max(worst, std::abs(evaluate(s, false).s_full));
    }
    CHECK(worst <= 2.0 + 1e-9);
  }

  TEST_CASE("slot-blind strategies have postselected equal to full") {
    Philox rng(14, 0);
    for (int trial = 0; trial < 20; ++trial) {
      auto s = random_strategy(rng, 3, false);
      for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t x = 0; x < 2; ++x) {
          for (auto* row : {&s.alice(l, x), &s.bob(l, x)}) {
            row->p[0] += row->p[2];
            row->p[1] += row->p[3];
            row->p[2] = row->p[3] = 0.0;
          }
        }
      const auto r = evaluate(s);
      CHECK(r.s_postselected == doctest::Approx(r.s_full));
      for (const auto& row : r.pairs)
        for (const auto& p : row) CHECK(p.keep_rate == doctest::Approx(1.0));
    }
  }

  TEST_CASE("single hidden value: keep-rate is 0 or 1") {
    Philox rng(15, 0);
    for (int trial = 0; trial < 200; ++trial) {
      const auto r = evaluate(random_strategy(rng, 1, true));
      for (const auto& row : r.pairs)
        for (const auto& p : row) CHECK((p.keep_rate == 0.0 || p.keep_rate == 1.0));
      CHECK(std::abs(r.s_postselected) <= 4.0);
    }
  }

  TEST_CASE("strategy validation") {
    LocalStrategy empty;
    CHECK_THROWS_AS(evaluate(empty), DomainError);
    LocalStrategy s(2);
    CHECK_THROWS_AS(s.set_weights({0.5}), DomainError);
    s.set_weights({0.7, 0.7});
    CHECK_THROWS_AS(s.validate(), DomainError);
    s.set_weights({0.5, 0.5});
    s.alice(0, 1).p = {0.5, 0.5, 0.5, 0.0};
    CHECK_THROWS_AS(evaluate(s), DomainError);
    CHECK_THROWS_AS(s.bob(0, 2), std::out_of_range);
  }

  TEST_CASE("attack streams through the coincidence analysis") {
    auto c = pipeline_config();
    const auto post = run_pipeline(attack_strategy(), c, equal_slot_window(c), 0.01);
    CHECK(post.s.value == doctest::Approx(4.0));
    for (const auto& m : post.counts) CHECK(m.total() > 1000);

    const auto all = run_pipeline(attack_strategy(), c, analysis::CoincidencePolicy::all_slots(), 0.01);
    CHECK(std::abs(all.s.value - 2.0) < 4.0 * all.s.sigma);

    c.set_efficiency(0.0);
    const auto out = simulate_attack(attack_strategy(), c, chsh_schedule(0.001, c.rep_rate));
    CHECK(analysis::find_coincidences(out.alice, out.bob, out.clock, equal_slot_window(c)).empty());
  }

  TEST_CASE("pipeline matches exact evaluation for a stochastic strategy") {
    Philox rng(16, 0);
    const auto s = random_strategy(rng, 3, false);
    const auto c = pipeline_config();
    const auto exact = evaluate(s);
    const auto sim = run_pipeline(s, c, equal_slot_window(c), 0.01);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto [x, y] = kChshPairs[k];
      CHECK(std::abs(sim.correlations[k].value - exact.pairs[x][y].postselected_correlation) <
            4.0 * sim.correlations[k].sigma);
    }
    CHECK(std::abs(sim.s.value - exact.s_postselected) < 4.0 * sim.s.sigma);
  }

  TEST_CASE("optimizer finds the maximal postselected violation") {
    OptimizerConfig cfg;
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = optimize_strategy(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(res.objective == doctest::Approx(4.0));
    CHECK(res.report.s_postselected == doctest::Approx(4.0));
    CHECK(res.report.s_full <= 2.0 + 1e-9);
    CHECK(secs < 30.0);
    for (std::size_t i = 1; i < res.accepted_history.size(); ++i)
      CHECK(res.accepted_history[i] >= res.accepted_history[i - 1]);
  }

  TEST_CASE("optimizer is deterministic and thread-count independent") {
    OptimizerConfig cfg;
    cfg.objective = Objective::FitQuantumStatistics;
    cfg.n_lambda = 4;
    cfg.restarts = 4;
    cfg.max_sweeps = 20;
    cfg.threads = 1;
    const auto a = optimize_strategy(cfg);
    cfg.threads = 4;
    const auto b = optimize_strategy(cfg);
    CHECK(a.strategy == b.strategy);
    CHECK(a.objective == b.objective);
    CHECK(a.best_restart == b.best_restart);
    cfg.seed = 2;
    CHECK(!(optimize_strategy(cfg).strategy == a.strategy));
  }

  TEST_CASE("fit objective decreases over accepted steps") {
    OptimizerConfig cfg;
    cfg.objective = Objective::FitQuantumStatistics;
    cfg.n_lambda = 6;
    cfg.restarts = 3;
    cfg.max_sweeps = 60;
    const auto res = optimize_strategy(cfg);
    REQUIRE(res.accepted_history.size() > 1);
    for (std::size_t i = 1; i < res.accepted_history.size(); ++i)
      CHECK(res.accepted_history[i] <= res.accepted_history[i - 1]);
    CHECK(res.objective == doctest::Approx(res.accepted_history.back()));
    CHECK(res.objective == doctest::Approx(fit_deviation(res.report, cfg.visibility, cfg.angles)));
    CHECK(res.report.s_full <= 2.0 + 1e-9);
  }

  TEST_CASE("single hidden value optimizer keeps whole pairs or none") {
    OptimizerConfig cfg;
    cfg.n_lambda = 1;
    const auto res = optimize_strategy(cfg);
    for (const auto& row : res.report.pairs)
      for (const auto& p : row) CHECK((p.keep_rate == 0.0 || p.keep_rate == 1.0));
    CHECK(std::abs(res.report.s_postselected) <= 4.0);
  }

  TEST_CASE("optimizer config errors") {
    OptimizerConfig cfg;
    cfg.n_lambda = 0;
    CHECK_THROWS_AS(optimize_strategy(cfg), ConfigError);
    cfg = OptimizerConfig{};
    cfg.restarts = 0;
    CHECK_THROWS_AS(optimize_strategy(cfg), ConfigError);
  }
}
