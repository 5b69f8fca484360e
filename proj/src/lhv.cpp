#include "tbell/lhv.hpp"

#include "tbell/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace tbell::lhv {

namespace {

constexpr TimeBin kBins[2] = {TimeBin::S, TimeBin::L};

struct Cell {
  bool alice;
  std::size_t lambda;
  std::size_t setting;
};

std::vector<Cell> all_cells(const LocalStrategy& s) {
  std::vector<Cell> cells;
  for (std::size_t l = 0; l < s.n_lambda(); ++l) {
    for (std::size_t i = 0; i < s.settings_a(); ++i) cells.push_back({true, l, i});
    for (std::size_t j = 0; j < s.settings_b(); ++j) cells.push_back({false, l, j});
  }
  return cells;
}

Response& row(LocalStrategy& s, const Cell& c) {
  return c.alice ? s.alice(c.lambda, c.setting) : s.bob(c.lambda, c.setting);
}

Response random_deterministic(Philox& rng) {
  const auto k = static_cast<std::size_t>(rng() % 4);
  Response r;
  r.p = {0.0, 0.0, 0.0, 0.0};
  r.p[k] = 1.0;
  return r;
}

Response random_stochastic(Philox& rng) {
  Response r;
  double sum = 0.0;
  for (double& v : r.p) {
    v = rng.exponential(1.0);
    sum += v;
  }
  for (double& v : r.p) v /= sum;
  return r;
}

struct RestartResult {
  LocalStrategy strategy;
  double objective = 0.0;
  std::vector<double> history;
};

RestartResult maximize_s(const OptimizerConfig& cfg, Philox& rng) {
  LocalStrategy s(cfg.n_lambda);
  for (const auto& c : all_cells(s)) row(s, c) = random_deterministic(rng);
  double best = evaluate(s).s_postselected;
  std::vector<double> history{best};
  const auto cells = all_cells(s);

  for (std::size_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    bool improved = false;
    for (const auto& c : cells) {
      const Response keep = row(s, c);
      Response choice = keep;
      for (std::size_t k = 0; k < 4; ++k) {
        Response trial;
        trial.p = {0.0, 0.0, 0.0, 0.0};
        trial.p[k] = 1.0;
        row(s, c) = trial;
        const double v = evaluate(s).s_postselected;
        if (v > best + 1e-12) {
          best = v;
          choice = trial;
          improved = true;
          history.push_back(best);
        }
      }
      row(s, c) = choice;
    }
    if (!improved) break;
  }
  return {s, best, history};
}

RestartResult fit_quantum(const OptimizerConfig& cfg, Philox& rng) {
  LocalStrategy s(cfg.n_lambda);
  for (const auto& c : all_cells(s)) row(s, c) = random_stochastic(rng);
  auto objective = [&](const LocalStrategy& st) { return fit_deviation(evaluate(st), cfg.visibility, cfg.angles); };
  double best = objective(s);
  std::vector<double> history{best};
  const auto cells = all_cells(s);

  double step = 0.5;
  for (std::size_t sweep = 0; sweep < cfg.max_sweeps && step > 1e-4; ++sweep) {
    bool improved = false;
    for (const auto& c : cells) {
      for (std::size_t k = 0; k < 4; ++k) {
        const Response keep = row(s, c);
        Response trial = keep;
        for (std::size_t m = 0; m < 4; ++m) trial.p[m] = (1.0 - step) * keep.p[m] + (m == k ? step : 0.0);
        row(s, c) = trial;
        const double v = objective(s);
        if (v < best - 1e-12) {
          best = v;
          improved = true;
          history.push_back(best);
        } else {
          row(s, c) = keep;
        }
      }
    }
    if (!improved) step /= 2.0;
  }
  return {s, best, history};
}

}  // namespace

Response Response::deterministic(TimeBin bin, Outcome o) {
  Response r;
  r.p = {0.0, 0.0, 0.0, 0.0};
  r.p[index(bin, o)] = 1.0;
  return r;
}

bool Response::is_deterministic() const {
  return std::count(p.begin(), p.end(), 1.0) == 1 && std::count(p.begin(), p.end(), 0.0) == 3;
}

LocalStrategy::LocalStrategy(std::size_t n_lambda, std::size_t settings_a, std::size_t settings_b)
    : weights_(n_lambda, n_lambda > 0 ? 1.0 / static_cast<double>(n_lambda) : 0.0),
      settings_a_(settings_a),
      settings_b_(settings_b),
      alice_(n_lambda * settings_a),
      bob_(n_lambda * settings_b) {}

void LocalStrategy::set_weights(std::vector<double> w) {
  if (w.size() != weights_.size()) throw DomainError("weight vector size must equal |Lambda|");
  weights_ = std::move(w);
}

const Response& LocalStrategy::alice(std::size_t lambda, std::size_t setting) const {
  return alice_.at(lambda * settings_a_ + setting);
}
const Response& LocalStrategy::bob(std::size_t lambda, std::size_t setting) const {
  return bob_.at(lambda * settings_b_ + setting);
}
Response& LocalStrategy::alice(std::size_t lambda, std::size_t setting) {
  if (setting >= settings_a_) throw std::out_of_range("Alice setting index");
  return alice_.at(lambda * settings_a_ + setting);
}
Response& LocalStrategy::bob(std::size_t lambda, std::size_t setting) {
  if (setting >= settings_b_) throw std::out_of_range("Bob setting index");
  return bob_.at(lambda * settings_b_ + setting);
}

void LocalStrategy::validate() const {
  if (weights_.empty()) throw DomainError("hidden-variable space is empty");
  if (settings_a_ == 0 || settings_b_ == 0) throw DomainError("each party needs at least one setting");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("negative hidden-variable weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("hidden-variable weights must sum to 1");
  auto check = [](const std::vector<Response>& rows) {
    for (const auto& r : rows) {
      double t = 0.0;
      for (double v : r.p) {
        if (!(v >= 0.0)) throw DomainError("negative response probability");
        t += v;
      }
      if (std::abs(t - 1.0) > 1e-9) throw DomainError("response row must sum to 1");
    }
  };
  check(alice_);
  check(bob_);
}

StrategyReport evaluate(const LocalStrategy& s, bool postselect) {
  s.validate();
  StrategyReport rep;
  rep.pairs.assign(s.settings_a(), std::vector<PairStatistics>(s.settings_b()));
  for (std::size_t i = 0; i < s.settings_a(); ++i) {
    for (std::size_t j = 0; j < s.settings_b(); ++j) {
      double keep = 0.0, kept_ab = 0.0, kept_a = 0.0, full = 0.0;
      for (std::size_t l = 0; l < s.n_lambda(); ++l) {
        const Response& ra = s.alice(l, i);
        const Response& rb = s.bob(l, j);
        for (TimeBin ba : kBins)
          for (Outcome a : qcore::kOutcomes)
            for (TimeBin bb : kBins)
              for (Outcome b : qcore::kOutcomes) {
                const double p = s.weights()[l] * ra(ba, a) * rb(bb, b);
                if (p == 0.0) continue;
                const double ab = qcore::sign(a) * qcore::sign(b);
                full += ab * p;
                if (ba == bb) {
                  keep += p;
                  kept_ab += ab * p;
                  kept_a += qcore::sign(a) * p;
                }
              }
      }
      auto& ps = rep.pairs[i][j];
      ps.keep_rate = keep;
      ps.full_correlation = full;
      ps.postselected_correlation = keep > 0.0 ? kept_ab / keep : 0.0;
      ps.alice_marginal_kept = keep > 0.0 ? kept_a / keep : 0.0;
    }
  }
  if (s.settings_a() >= 2 && s.settings_b() >= 2) {
    auto chsh = [&](auto field) {
      double v = 0.0;
      for (std::size_t k = 0; k < kChshPairs.size(); ++k) {
        const double e = field(rep.pairs[kChshPairs[k][0]][kChshPairs[k][1]]);
        v += k == 3 ? -e : e;
      }
      return v;
    };
    rep.s_postselected = chsh([](const PairStatistics& p) { return p.postselected_correlation; });
    rep.s_full = chsh([](const PairStatistics& p) { return p.full_correlation; });
  }
  rep.s = postselect ? rep.s_postselected : rep.s_full;
  return rep;
}

LocalStrategy attack_strategy() {
  using TimeBin::L;
  using TimeBin::S;
  constexpr Outcome kP = Outcome::Plus;
  constexpr Outcome kM = Outcome::Minus;
  LocalStrategy s(2);
  // lambda 1
  s.alice(0, 0) = Response::deterministic(S, kP);
  s.alice(0, 1) = Response::deterministic(L, kP);
  s.bob(0, 0) = Response::deterministic(S, kP);
  s.bob(0, 1) = Response::deterministic(L, kM);
  // lambda 2
  s.alice(1, 0) = Response::deterministic(S, kP);
  s.alice(1, 1) = Response::deterministic(L, kP);
  s.bob(1, 0) = Response::deterministic(L, kP);
  s.bob(1, 1) = Response::deterministic(S, kP);
  return s;
}

eventsim::SettingSchedule chsh_schedule(double duration_per_setting, double rep_rate) {
  std::vector<eventsim::SettingEntry> entries(kChshPairs.size(), {0.0, 0.0, duration_per_setting});
  return eventsim::schedule_settings(entries, rep_rate);
}

eventsim::SimulationOutput simulate_attack(const LocalStrategy& strategy, const eventsim::SimConfig& config,
                                           const eventsim::SettingSchedule& schedule) {
  strategy.validate();
  if (strategy.settings_a() < 2 || strategy.settings_b() < 2) {
    throw DomainError("attack simulation needs two settings per party");
  }
  if (schedule.size() > kChshPairs.size()) throw ConfigError("schedule", "at most four CHSH setting pairs");

  std::vector<double> cdf(strategy.n_lambda());
  std::partial_sum(strategy.weights().begin(), strategy.weights().end(), cdf.begin());

  auto draw = [](const Response& r, Philox& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = 0;
    for (; k < 3; ++k) {
      acc += r.p[k];
      if (u < acc) break;
    }
    const TimeBin bin = k < 2 ? TimeBin::S : TimeBin::L;
    const Outcome o = k % 2 == 0 ? Outcome::Plus : Outcome::Minus;
    return std::pair{bin == TimeBin::S ? optics::Slot::Central : optics::Slot::Late, o};
  };

  return eventsim::generate(config, schedule, [&](std::size_t setting, Philox& rng) {
    const double u = rng.uniform() * cdf.back();
    const auto lambda = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), cdf.size() - 1);
    const auto [i, j] = kChshPairs[setting];
    const auto [slot_a, a] = draw(strategy.alice(lambda, i), rng);
    const auto [slot_b, b] = draw(strategy.bob(lambda, j), rng);
    return eventsim::PairEvent{slot_a, a, slot_b, b};
  });
}

double fit_deviation(const StrategyReport& report, double visibility, const qcore::ChshAngles& angles) {
  const double phi_a[2] = {angles.a, angles.a_prime};
  const double phi_b[2] = {angles.b, angles.b_prime};
  double worst = 0.0;
  for (const auto& [i, j] : kChshPairs) {
    const auto& ps = report.pairs.at(i).at(j);
    worst = std::max(worst, std::abs(ps.postselected_correlation - visibility * std::cos(phi_a[i] + phi_b[j])));
    worst = std::max(worst, std::abs(ps.keep_rate - 0.5));
  }
  return worst;
}

OptimizationResult optimize_strategy(const OptimizerConfig& cfg) {
  if (cfg.n_lambda == 0 || cfg.n_lambda > 64) throw ConfigError("lhv.n_lambda", "must lie in [1, 64]");
  if (cfg.restarts == 0) throw ConfigError("lhv.restarts", "must be positive");
  if (!(cfg.visibility >= 0.0 && cfg.visibility <= 1.0)) throw ConfigError("lhv.visibility", "must lie in [0, 1]");

  std::vector<RestartResult> results(cfg.restarts);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < cfg.restarts; r = next++) {
      Philox rng(cfg.seed, mix_stream(0x1B7, r));
      results[r] = cfg.objective == Objective::MaximizePostselectedS ? maximize_s(cfg, rng) : fit_quantum(cfg, rng);
    }
  };
  unsigned n_threads = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, cfg.restarts));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  const bool maximize = cfg.objective == Objective::MaximizePostselectedS;
  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    const bool better = maximize ? results[r].objective > results[best].objective + 1e-12
                                 : results[r].objective < results[best].objective - 1e-12;
    if (better) best = r;
  }
  OptimizationResult out;
  out.strategy = results[best].strategy;
  out.report = evaluate(out.strategy);
  out.objective = results[best].objective;
  out.accepted_history = std::move(results[best].history);
  out.best_restart = best;
  return out;
}

}  // namespace tbell::lhv
