#pragma once

// From tag streams to Bell-test statistics.

#include "tbell/eventsim.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace tbell::analysis {

using eventsim::PulseClock;
using eventsim::TagStream;
using optics::Slot;
using qcore::Outcome;

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
  double bin_width = 0.0;           ///< [s]
  std::vector<std::uint64_t> counts;  ///< arrival time modulo the pulse period

  double bin_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width; }
  std::uint64_t total() const;
};

/// Folded arrival-time histogram. `channel` restricts to one detector.
/// Throws ConfigError if bin_width is finer than the tagger resolution.
Histogram histogram(const TagStream& stream, const PulseClock& clock, double bin_width,
                    std::optional<std::uint8_t> channel = std::nullopt);

struct SlotCounts {
  std::uint64_t early = 0;
  std::uint64_t central = 0;
  std::uint64_t late = 0;
  std::uint64_t outside = 0;

  std::uint64_t lateral() const { return early + late; }
};

/// Peak areas: tags within +-half_window of each slot time.
SlotCounts slot_counts(const TagStream& stream, const PulseClock& clock, double half_window,
                       std::optional<std::uint8_t> channel = std::nullopt);

/// Central-slot delay estimated from a folded histogram: the center of the
/// window of width `window` holding the most counts. Used for imported dumps
/// whose slot offset is unknown.
double find_central_offset(const Histogram& h, double window);

// ---------------------------------------------------------------------------
// Coincidences

enum class CoincidenceMode {
  CentralOnly,  ///< both tags within window/2 of the central slot time
  AllSlots,     ///< any slot pair; window covers the full three-peak profile
  WindowOnly,   ///< any pair within the window, slot ignored (window < delta_t)
};

struct CoincidencePolicy {
  double window = 2.4e-9;
  CoincidenceMode mode = CoincidenceMode::CentralOnly;

  static CoincidencePolicy central_only(double window = 2.4e-9) { return {window, CoincidenceMode::CentralOnly}; }
  static CoincidencePolicy all_slots(double window = 8.1e-9) { return {window, CoincidenceMode::AllSlots}; }

  /// CentralOnly/WindowOnly need window < delta_t; AllSlots needs
  /// window >= 2 delta_t + 4 jitter_sigma.
  void validate(double delta_t, double jitter_sigma) const;

  friend bool operator==(const CoincidencePolicy&, const CoincidencePolicy&) = default;
};

struct Coincidence {
  Outcome a = Outcome::Plus;
  Outcome b = Outcome::Plus;
  std::uint32_t setting = 0;
  Slot slot_a = Slot::Central;
  Slot slot_b = Slot::Central;

  friend bool operator==(const Coincidence&, const Coincidence&) = default;
};

/// Greedy earliest-first one-to-one matching of tags with |t_A - t_B| <= window.
/// Setting index is taken from Alice's pulse via `schedule` (0 if absent).
/// Throws AnalysisError if either stream is not sorted by timestamp.
std::vector<Coincidence> find_coincidences(const TagStream& alice, const TagStream& bob, const PulseClock& clock,
                                           const CoincidencePolicy& policy,
                                           const eventsim::SettingSchedule* schedule = nullptr);

// ---------------------------------------------------------------------------
// Correlations and CHSH

struct CountMatrix {
  std::uint64_t pp = 0;
  std::uint64_t pm = 0;
  std::uint64_t mp = 0;
  std::uint64_t mm = 0;

  std::uint64_t total() const { return pp + pm + mp + mm; }
  void add(Outcome a, Outcome b);
  std::uint64_t operator()(Outcome a, Outcome b) const;
};

std::vector<CountMatrix> tally(const std::vector<Coincidence>& coincidences, std::size_t n_settings);

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

/// E = (N++ + N-- - N+- - N-+)/N with sigma = sqrt((1 - E^2)/N).
Estimate estimate_correlation(const CountMatrix& counts);

struct BellRunResult {
  std::array<CountMatrix, 4> counts;
  std::array<Estimate, 4> correlations;
  Estimate s;
  double significance = 0.0;  ///< (S - 2) / sigma_S
  std::optional<Estimate> visibility;
};

/// Runs ordered as E(a,b), E(a',b), E(a,b'), E(a',b'); S = E1 + E2 + E3 - E4.
BellRunResult estimate_chsh(const std::vector<CountMatrix>& runs);

// ---------------------------------------------------------------------------
// Visibility fit

struct ScanPoint {
  double phase = 0.0;
  double rate = 0.0;
};

struct VisibilityFit {
  Estimate visibility;
  double mean_rate = 0.0;  ///< C
  double phase0 = 0.0;
  bool covers_half_period = true;
};

/// Least squares r(phi) = C [1 + V cos(phi + phi0)], solved linearly as
/// c0 + c1 cos(phi) + c2 sin(phi). sigma_V from the residual covariance.
VisibilityFit fit_visibility(const std::vector<ScanPoint>& scan);

}  // namespace tbell::analysis
