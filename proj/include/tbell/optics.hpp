#pragma once

// Amplitude-level propagation of a time-bin pair through the measurement
// stations. Each photon takes the short or long arm of its station's
// unbalanced interferometer, so it is detected in one of three slots:
//
//   early   = |S> through the short arm     (t0 - dt)
//   central = |S> long or |L> short         (t0)
//   late    = |L> through the long arm      (t0 + dt)
//
// In the passive schemes a 50:50 splitter picks the arm; in the active scheme
// a balanced MZI driven with phase phi_S (|S> pulse) / phi_L (|L> pulse) does.

#include "tbell/qcore.hpp"

#include <array>
#include <complex>
#include <optional>
#include <utility>

namespace tbell::optics {

using qcore::Outcome;
using qcore::Scheme;

enum class Slot : int { Early = -1, Central = 0, Late = 1 };
enum class TimeBin { S, L };
enum class Arm { Short, Long };
enum class Party { Alice, Bob };

inline constexpr Slot kSlots[3] = {Slot::Early, Slot::Central, Slot::Late};

constexpr int slot_index(Slot s) noexcept { return static_cast<int>(s) + 1; }
constexpr int outcome_index(Outcome a) noexcept { return a == Outcome::Plus ? 0 : 1; }

struct OpticalLayout {
  double delta_t = 3e-9;  ///< pump and analyzer imbalance [s]
  double phi_a = 0.0;
  double phi_b = 0.0;
  double switch_a = qcore::kPi;
  double switch_b = qcore::kPi;
  std::optional<double> long_bin_a;  ///< overrides switch_a - pi
  std::optional<double> long_bin_b;
  Scheme scheme = Scheme::PassivePostselected;
  double visibility = 1.0;

  void validate() const;
  qcore::MeasurementSetting alice() const;
  qcore::MeasurementSetting bob() const;
  qcore::MeasurementSetting setting(Party p) const { return p == Party::Alice ? alice() : bob(); }

  friend bool operator==(const OpticalLayout&, const OpticalLayout&) = default;
};

/// Joint law over (slot_A, a, slot_B, b): 3 x 2 x 3 x 2 = 36 entries.
class SlotOutcomeDistribution {
 public:
  static constexpr std::size_t kSize = 36;

  static constexpr std::size_t index(Slot sa, Outcome a, Slot sb, Outcome b) noexcept {
    return ((static_cast<std::size_t>(slot_index(sa)) * 2 + outcome_index(a)) * 3 + slot_index(sb)) * 2 +
           outcome_index(b);
  }

  double operator()(Slot sa, Outcome a, Slot sb, Outcome b) const { return p_[index(sa, a, sb, b)]; }
  double& operator()(Slot sa, Outcome a, Slot sb, Outcome b) { return p_[index(sa, a, sb, b)]; }

  const std::array<double, kSize>& table() const noexcept { return p_; }
  double total() const;

  /// Detector-summed weight of a slot pair.
  double slot_pair(Slot sa, Slot sb) const;

  /// Detector law inside a slot pair, normalized; entries indexed [a][b] with + first.
  std::array<std::array<double, 2>, 2> conditional(Slot sa, Slot sb) const;

  /// sum ab P(a, b) over all slot pairs.
  double full_correlation() const;

  /// Single-party slot marginal (early, central, late).
  std::array<double, 3> party_marginal(Party p) const;

 private:
  std::array<double, kSize> p_{};
};

/// Port probabilities (cos^2(phi/2), sin^2(phi/2)) of a balanced MZI.
std::pair<double, double> balanced_mzi_split(double phi_m);

/// Phase applied by the fast modulator to a pulse in the given bin: phi_S or phi_S - pi.
double switch_phase_profile(TimeBin bin, double phi_s);

/// Amplitude for a photon entering in `bin` to be detected at (slot, a) by a
/// station with the given setting. The two-photon probability follows from
/// these and the pair density matrix; the induced POVM is exactly the one
/// returned by qcore::povm_element for the same setting (up to slot marginal).
std::complex<double> detection_amplitude(const qcore::MeasurementSetting& s, TimeBin bin, Slot slot, Outcome a);

SlotOutcomeDistribution joint_distribution(const OpticalLayout& layout);

/// Single-party slot weights (early, central, late) summed over detectors.
std::array<double, 3> detector_histogram(const OpticalLayout& layout, Party party);

}  // namespace tbell::optics
