#include "tbell/eventsim.hpp"

#include "tbell/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace tbell::eventsim {

namespace {

constexpr std::uint64_t kBlockPulses = std::uint64_t{1} << 20;
constexpr double kMaxTicks = 9.0e18;

struct BlockOutput {
  TagStream alice;
  TagStream bob;
  std::uint64_t pairs = 0;
};

std::uint64_t to_ticks(double seconds, double resolution) {
  const double x = std::floor(seconds / resolution + 0.5);
  return x <= 0.0 ? 0 : static_cast<std::uint64_t>(x);
}

BlockOutput run_block(const SimConfig& cfg, const SettingSchedule& schedule, const PairSampler& sampler,
                      std::uint64_t block) {
  BlockOutput out;
  Philox rng(cfg.seed, mix_stream(block, 0));
  const double period = cfg.period();
  const std::uint64_t begin = block * kBlockPulses;
  const std::uint64_t end = std::min(schedule.total_pulses, begin + kBlockPulses);

  auto emit = [&](optics::Party party, std::uint64_t pulse, Slot slot, Outcome o) {
    const std::uint8_t ch = channel_of(party, o);
    const bool detected = rng.uniform() < cfg.efficiency[ch];
    const double jitter = cfg.jitter_sigma * rng.normal();
    if (!detected) return;
    const double t = static_cast<double>(pulse) * period + cfg.slot_offset +
                     static_cast<double>(static_cast<int>(slot)) * cfg.delta_t + jitter;
    (party == optics::Party::Alice ? out.alice : out.bob).push_back({ch, to_ticks(t, cfg.tagger_resolution)});
  };

  if (cfg.pair_prob > 0.0) {
    std::size_t setting = schedule.setting_of(begin);
    std::uint64_t gap = rng.geometric(cfg.pair_prob);
    for (std::uint64_t k = begin; gap < end - k;) {
      k += gap;
      while (setting + 1 < schedule.starts.size() && schedule.starts[setting + 1] <= k) ++setting;
      const PairEvent ev = sampler(setting, rng);
      ++out.pairs;
      emit(optics::Party::Alice, k, ev.slot_a, ev.a);
      emit(optics::Party::Bob, k, ev.slot_b, ev.b);
      ++k;
      gap = rng.geometric(cfg.pair_prob);
    }
  }

  if (cfg.dark_rate > 0.0) {
    const double t0 = static_cast<double>(begin) * period;
    const double t1 = static_cast<double>(end) * period;
    for (std::uint8_t ch = 0; ch < kNumChannels; ++ch) {
      TagStream& dst = ch < 2 ? out.alice : out.bob;
      for (double t = t0 + rng.exponential(cfg.dark_rate); t < t1; t += rng.exponential(cfg.dark_rate)) {
        dst.push_back({ch, to_ticks(t, cfg.tagger_resolution)});
      }
    }
  }
  return out;
}

void apply_dead_time(TagStream& s, double dead_time, double resolution) {
  if (dead_time <= 0.0) return;
  const auto dead_ticks = static_cast<std::uint64_t>(std::ceil(dead_time / resolution));
  std::array<std::optional<std::uint64_t>, kNumChannels> last{};
  std::erase_if(s, [&](const TagRecord& r) {
    auto& l = last[r.channel];
    if (l && r.timestamp - *l < dead_ticks) return true;
    l = r.timestamp;
    return false;
  });
}

}  // namespace

void SimConfig::validate() const {
  if (!(rep_rate > 0.0)) throw ConfigError("sim.rep_rate", "must be positive");
  if (!(pair_prob >= 0.0 && pair_prob <= 1.0)) throw ConfigError("sim.pair_prob", "must lie in [0, 1]");
  for (std::size_t i = 0; i < efficiency.size(); ++i) {
    if (!(efficiency[i] >= 0.0 && efficiency[i] <= 1.0)) {
      throw ConfigError("sim.efficiency[" + std::to_string(i) + "]", "must lie in [0, 1]");
    }
  }
  if (!(jitter_sigma >= 0.0)) throw ConfigError("sim.jitter_sigma", "must be nonnegative");
  if (!(dark_rate >= 0.0)) throw ConfigError("sim.dark_rate", "must be nonnegative");
  if (!(duration >= 0.0)) throw ConfigError("sim.duration", "must be nonnegative");
  if (!(tagger_resolution > 0.0)) throw ConfigError("sim.tagger_resolution", "must be positive");
  if (!(delta_t > 0.0)) throw ConfigError("sim.delta_t", "must be positive");
  if (!(dead_time >= 0.0)) throw ConfigError("sim.dead_time", "must be nonnegative");
  if (!(slot_offset >= delta_t && slot_offset + delta_t < period())) {
    throw ConfigError("sim.slot_offset", "all three slots must fit inside one pulse period");
  }
  if (duration * rep_rate > 9.0e15) throw ConfigError("sim.duration", "pulse count overflows the counters");
}

std::int64_t PulseClock::pulse_of(std::uint64_t ticks) const {
  return static_cast<std::int64_t>(std::floor((seconds(ticks) - slot_offset) * rep_rate + 0.5));
}

double PulseClock::central_offset(std::uint64_t ticks) const {
  return seconds(ticks) - slot_offset - static_cast<double>(pulse_of(ticks)) * period();
}

Slot PulseClock::slot_of(std::uint64_t ticks) const {
  const double s = std::round(central_offset(ticks) / delta_t);
  if (s <= -1.0) return Slot::Early;
  if (s >= 1.0) return Slot::Late;
  return Slot::Central;
}

std::size_t SettingSchedule::setting_of(std::uint64_t pulse) const {
  const auto it = std::upper_bound(starts.begin(), starts.end(), pulse);
  return it == starts.begin() ? 0 : static_cast<std::size_t>(it - starts.begin() - 1);
}

SettingSchedule schedule_settings(const std::vector<SettingEntry>& entries, double rep_rate) {
  if (entries.empty()) throw ConfigError("schedule", "must contain at least one entry");
  if (!(rep_rate > 0.0)) throw ConfigError("sim.rep_rate", "must be positive");
  SettingSchedule s;
  s.entries = entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!(entries[i].duration > 0.0)) {
      throw ConfigError("schedule[" + std::to_string(i) + "].duration", "must be positive");
    }
    const double n = std::floor(entries[i].duration * rep_rate);
    if (n > 9.0e15) throw ConfigError("schedule[" + std::to_string(i) + "].duration", "pulse count overflow");
    s.starts.push_back(s.total_pulses);
    s.total_pulses += static_cast<std::uint64_t>(n);
  }
  return s;
}

DistributionSampler::DistributionSampler(const optics::SlotOutcomeDistribution& dist) {
  const double total = dist.total();
  if (!(total > 0.0)) throw DomainError("distribution has zero mass");
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf_.size(); ++i) {
    acc += dist.table()[i] / total;
    cdf_[i] = acc;
  }
  cdf_.back() = 1.0;
}

PairEvent DistributionSampler::operator()(Philox& rng) const {
  const double u = rng.uniform();
  const auto idx = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  const std::size_t i = std::min(idx, cdf_.size() - 1);
  // Inverse of SlotOutcomeDistribution::index.
  const int b = static_cast<int>(i % 2);
  const int sb = static_cast<int>((i / 2) % 3);
  const int a = static_cast<int>((i / 6) % 2);
  const int sa = static_cast<int>(i / 12);
  auto slot = [](int s) { return static_cast<Slot>(s - 1); };
  auto out = [](int o) { return o == 0 ? Outcome::Plus : Outcome::Minus; };
  return {slot(sa), out(a), slot(sb), out(b)};
}

SimulationOutput generate(const SimConfig& config, const SettingSchedule& schedule, const PairSampler& sampler) {
  config.validate();
  if (schedule.entries.empty()) throw ConfigError("schedule", "must contain at least one entry");
  if (static_cast<double>(schedule.total_pulses) * config.period() / config.tagger_resolution > kMaxTicks) {
    throw ConfigError("sim.duration", "timestamps overflow 64-bit tick counters");
  }

  const std::uint64_t n_blocks = (schedule.total_pulses + kBlockPulses - 1) / kBlockPulses;
  std::vector<BlockOutput> blocks(n_blocks);
  unsigned n_threads = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::uint64_t>(n_threads, std::max<std::uint64_t>(n_blocks, 1)));

  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t b = next++; b < n_blocks; b = next++) blocks[b] = run_block(config, schedule, sampler, b);
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  SimulationOutput out;
  out.clock = PulseClock::from(config, schedule.total_pulses);
  out.schedule = schedule;
  for (auto& b : blocks) {
    out.alice.insert(out.alice.end(), b.alice.begin(), b.alice.end());
    out.bob.insert(out.bob.end(), b.bob.begin(), b.bob.end());
    out.emitted_pairs += b.pairs;
  }
  std::sort(out.alice.begin(), out.alice.end());
  std::sort(out.bob.begin(), out.bob.end());
  apply_dead_time(out.alice, config.dead_time, config.tagger_resolution);
  apply_dead_time(out.bob, config.dead_time, config.tagger_resolution);
  return out;
}

SimulationOutput run_simulation(const SimConfig& config, const optics::OpticalLayout& layout) {
  config.validate();
  const auto schedule = schedule_settings({{layout.phi_a, layout.phi_b, config.duration}}, config.rep_rate);
  return run_simulation(config, layout, schedule);
}

SimulationOutput run_simulation(const SimConfig& config, const optics::OpticalLayout& layout,
                                const SettingSchedule& schedule) {
  layout.validate();
  if (std::abs(layout.delta_t - config.delta_t) > 1e-15) {
    throw ConfigError("layout.delta_t", "must equal sim.delta_t");
  }
  std::vector<DistributionSampler> samplers;
  samplers.reserve(schedule.size());
  for (const auto& e : schedule.entries) {
    optics::OpticalLayout l = layout;
    l.phi_a = e.phi_a;
    l.phi_b = e.phi_b;
    samplers.emplace_back(optics::joint_distribution(l));
  }
  return generate(config, schedule,
                  [&samplers](std::size_t setting, Philox& rng) { return samplers[setting](rng); });
}

}  // namespace tbell::eventsim
