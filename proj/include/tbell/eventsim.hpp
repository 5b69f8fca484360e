#pragma once

// Monte Carlo realization of detection events for a pulsed time-bin source.
//
// Pulse k fires at k / rep_rate. A photon detected in slot s carries the
// timestamp  k / rep_rate + slot_offset + s * delta_t + N(0, jitter_sigma),
// quantized to the tagger resolution (round half up).

#include "tbell/optics.hpp"
#include "tbell/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace tbell::eventsim {

using optics::Slot;
using qcore::Outcome;

/// Detector channels: party x outcome.
enum Channel : std::uint8_t { kAlicePlus = 0, kAliceMinus = 1, kBobPlus = 2, kBobMinus = 3 };
inline constexpr int kNumChannels = 4;

constexpr std::uint8_t channel_of(optics::Party p, Outcome a) noexcept {
  return static_cast<std::uint8_t>((p == optics::Party::Alice ? 0 : 2) + (a == Outcome::Plus ? 0 : 1));
}
constexpr Outcome outcome_of(std::uint8_t channel) noexcept {
  return channel % 2 == 0 ? Outcome::Plus : Outcome::Minus;
}

struct SimConfig {
  double rep_rate = 76e6;          ///< [Hz]
  double pair_prob = 0.01;         ///< pair emission probability per pulse
  std::array<double, kNumChannels> efficiency{0.5, 0.5, 0.5, 0.5};
  double jitter_sigma = 300e-12;   ///< [s]
  double dark_rate = 0.0;          ///< per detector [Hz]
  double duration = 1.0;           ///< [s], used when no schedule is given
  double tagger_resolution = 81e-12;
  double delta_t = 3e-9;
  double slot_offset = 5e-9;       ///< central slot delay after the pulse [s]
  double dead_time = 0.0;          ///< per detector [s]; 0 disables
  std::uint64_t seed = 1;
  unsigned threads = 0;            ///< 0 = hardware concurrency; never affects results

  void set_efficiency(double eta) { efficiency.fill(eta); }
  double period() const { return 1.0 / rep_rate; }
  void validate() const;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct TagRecord {
  std::uint8_t channel = 0;
  std::uint64_t timestamp = 0;  ///< tagger ticks

  friend bool operator==(const TagRecord&, const TagRecord&) = default;
  friend bool operator<(const TagRecord& l, const TagRecord& r) {
    return l.timestamp != r.timestamp ? l.timestamp < r.timestamp : l.channel < r.channel;
  }
};

using TagStream = std::vector<TagRecord>;

/// Maps tagger ticks back onto the pulse train.
struct PulseClock {
  double rep_rate = 76e6;
  double resolution = 81e-12;
  double slot_offset = 5e-9;
  double delta_t = 3e-9;
  std::uint64_t n_pulses = 0;

  static PulseClock from(const SimConfig& c, std::uint64_t n_pulses) {
    return {c.rep_rate, c.tagger_resolution, c.slot_offset, c.delta_t, n_pulses};
  }

  double period() const { return 1.0 / rep_rate; }
  double seconds(std::uint64_t ticks) const { return static_cast<double>(ticks) * resolution; }
  /// Pulse whose central slot is nearest to the tag.
  std::int64_t pulse_of(std::uint64_t ticks) const;
  /// Offset of the tag from its pulse's central slot time [s].
  double central_offset(std::uint64_t ticks) const;
  /// Nearest slot to the tag.
  Slot slot_of(std::uint64_t ticks) const;
};

struct SettingEntry {
  double phi_a = 0.0;
  double phi_b = 0.0;
  double duration = 1.0;
};

/// Piecewise-constant analyzer settings aligned to the pulse clock.
struct SettingSchedule {
  std::vector<SettingEntry> entries;
  std::vector<std::uint64_t> starts;  ///< first pulse of each entry
  std::uint64_t total_pulses = 0;

  std::size_t size() const { return entries.size(); }
  std::size_t setting_of(std::uint64_t pulse) const;
  std::uint64_t pulses_in(std::size_t i) const {
    return (i + 1 < starts.size() ? starts[i + 1] : total_pulses) - starts[i];
  }
};

/// Entry i spans floor(duration_i * rep_rate) pulses, laid out back to back.
SettingSchedule schedule_settings(const std::vector<SettingEntry>& entries, double rep_rate);

/// Outcome of one emitted pair, before detector losses.
struct PairEvent {
  Slot slot_a = Slot::Central;
  Outcome a = Outcome::Plus;
  Slot slot_b = Slot::Central;
  Outcome b = Outcome::Plus;
};

/// Draws the pair for a pulse given its setting index. Must be a pure function
/// of its arguments and the generator state.
using PairSampler = std::function<PairEvent(std::size_t setting, Philox& rng)>;

struct SimulationOutput {
  TagStream alice;
  TagStream bob;
  PulseClock clock;
  SettingSchedule schedule;
  std::uint64_t emitted_pairs = 0;
};

/// Sampler drawing from a fixed SlotOutcomeDistribution table.
class DistributionSampler {
 public:
  explicit DistributionSampler(const optics::SlotOutcomeDistribution& dist);
  PairEvent operator()(Philox& rng) const;

 private:
  std::array<double, optics::SlotOutcomeDistribution::kSize> cdf_{};
};

/// Core generator shared by quantum and hidden-variable sources.
SimulationOutput generate(const SimConfig& config, const SettingSchedule& schedule, const PairSampler& sampler);

/// Constant setting for config.duration.
SimulationOutput run_simulation(const SimConfig& config, const optics::OpticalLayout& layout);

/// Analyzer phases of `layout` are replaced per schedule entry.
SimulationOutput run_simulation(const SimConfig& config, const optics::OpticalLayout& layout,
                                const SettingSchedule& schedule);

}  // namespace tbell::eventsim
