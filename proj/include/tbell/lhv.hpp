#pragma once

// Local hidden-variable strategies for a two-slot Franson-type test.
//
// Each party answers from a table indexed by (hidden variable, own setting)
// only, so locality holds by construction. A response is a time slot (S or L)
// and an outcome; postselection keeps a round when both parties chose the
// same slot. Conditioning on that event lets local slot choices depend on
// local settings and fake a CHSH violation.

#include "tbell/eventsim.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace tbell::lhv {

using optics::TimeBin;
using qcore::Outcome;

/// Probability vector over (S,+), (S,-), (L,+), (L,-).
struct Response {
  std::array<double, 4> p{1.0, 0.0, 0.0, 0.0};

  static constexpr std::size_t index(TimeBin bin, Outcome o) noexcept {
    return (bin == TimeBin::S ? 0 : 2) + (o == Outcome::Plus ? 0 : 1);
  }
  static Response deterministic(TimeBin bin, Outcome o);
  double operator()(TimeBin bin, Outcome o) const { return p[index(bin, o)]; }
  bool is_deterministic() const;

  friend bool operator==(const Response&, const Response&) = default;
};

class LocalStrategy {
 public:
  LocalStrategy() = default;
  /// Uniform weights, every row (S, +1).
  LocalStrategy(std::size_t n_lambda, std::size_t settings_a = 2, std::size_t settings_b = 2);

  std::size_t n_lambda() const noexcept { return weights_.size(); }
  std::size_t settings_a() const noexcept { return settings_a_; }
  std::size_t settings_b() const noexcept { return settings_b_; }

  const std::vector<double>& weights() const noexcept { return weights_; }
  void set_weights(std::vector<double> w);

  const Response& alice(std::size_t lambda, std::size_t setting) const;
  const Response& bob(std::size_t lambda, std::size_t setting) const;
  Response& alice(std::size_t lambda, std::size_t setting);
  Response& bob(std::size_t lambda, std::size_t setting);

  /// Throws DomainError on empty Lambda, bad weights, or non-stochastic rows.
  void validate() const;

  friend bool operator==(const LocalStrategy&, const LocalStrategy&) = default;

 private:
  std::vector<double> weights_;
  std::size_t settings_a_ = 0;
  std::size_t settings_b_ = 0;
  std::vector<Response> alice_;  ///< [lambda * settings_a + setting]
  std::vector<Response> bob_;    ///< [lambda * settings_b + setting]
};

/// Setting pairs of the CHSH sum in the order E(a,b), E(a',b), E(a,b'), E(a',b').
inline constexpr std::array<std::array<std::size_t, 2>, 4> kChshPairs{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};

struct PairStatistics {
  double postselected_correlation = 0.0;  ///< 0 when nothing is kept
  double keep_rate = 0.0;
  double full_correlation = 0.0;
  double alice_marginal_kept = 0.0;  ///< <a> over kept rounds
};

struct StrategyReport {
  std::vector<std::vector<PairStatistics>> pairs;  ///< [setting_a][setting_b]
  double s_postselected = 0.0;
  double s_full = 0.0;
  double s = 0.0;  ///< whichever of the two evaluate() was asked for
};

/// Exact expectation by enumeration over Lambda and the stochastic rows.
StrategyReport evaluate(const LocalStrategy& strategy, bool postselect = true);

/// Two-point strategy reaching postselected S = 4 with keep-rate 1/2.
LocalStrategy attack_strategy();

/// CHSH schedule (four entries, phases unused) for feeding strategies to the pipeline.
eventsim::SettingSchedule chsh_schedule(double duration_per_setting, double rep_rate);

/// Classical tag streams: slot S is timed as the central slot, L as the late
/// slot. Setting index k of the schedule maps to kChshPairs[k].
eventsim::SimulationOutput simulate_attack(const LocalStrategy& strategy, const eventsim::SimConfig& config,
                                           const eventsim::SettingSchedule& schedule);

enum class Objective { MaximizePostselectedS, FitQuantumStatistics };

struct OptimizerConfig {
  Objective objective = Objective::MaximizePostselectedS;
  std::size_t n_lambda = 2;
  std::size_t restarts = 10;
  std::size_t max_sweeps = 200;
  double visibility = 1.0;   ///< FitQuantumStatistics target
  qcore::ChshAngles angles;  ///< FitQuantumStatistics target
  std::uint64_t seed = 1;
  unsigned threads = 0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizationResult {
  LocalStrategy strategy;
  StrategyReport report;
  double objective = 0.0;               ///< S_post, or the fit deviation
  std::vector<double> accepted_history;  ///< objective after each accepted step of the winning restart
  std::size_t best_restart = 0;
};

/// Max-abs deviation of postselected correlations from V cos(phi_A + phi_B)
/// and of keep-rates from 1/2 over the four CHSH pairs.
double fit_deviation(const StrategyReport& report, double visibility, const qcore::ChshAngles& angles);

/// Coordinate search with random restarts; deterministic given the seed.
OptimizationResult optimize_strategy(const OptimizerConfig& config);

}  // namespace tbell::lhv
