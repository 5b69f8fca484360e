#include "tbell/optics.hpp"

#include "tbell/error.hpp"

#include <cmath>
#include <numeric>

namespace tbell::optics {

namespace {

using Complex = std::complex<double>;
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

// Arm that lands a pulse from `bin` in `slot`, if any.
std::optional<Arm> arm_for(TimeBin bin, Slot slot) {
  if (bin == TimeBin::S) {
    if (slot == Slot::Early) return Arm::Short;
    if (slot == Slot::Central) return Arm::Long;
  } else {
    if (slot == Slot::Central) return Arm::Short;
    if (slot == Slot::Late) return Arm::Long;
  }
  return std::nullopt;
}

// Routing amplitude into the unbalanced interferometer's arms.
Complex router_amplitude(const qcore::MeasurementSetting& s, TimeBin bin, Arm arm) {
  if (s.scheme != Scheme::ActiveSwitch) return kInvSqrt2;
  const double phi_m = bin == TimeBin::S ? s.switch_phase : s.long_bin_phase;
  const Complex e = std::polar(1.0, phi_m);
  // Balanced MZI: short port (1 + e^{i phi})/2, long port (1 - e^{i phi})/2.
  return arm == Arm::Short ? (1.0 + e) / 2.0 : (1.0 - e) / 2.0;
}

// Output splitter: the long arm carries the analyzer phase and the detector sign.
Complex analyzer_amplitude(const qcore::MeasurementSetting& s, Arm arm, Outcome a) {
  if (arm == Arm::Short) return kInvSqrt2;
  return static_cast<double>(qcore::sign(a)) * std::polar(kInvSqrt2, s.analyzer_phase);
}

}  // namespace

void OpticalLayout::validate() const {
  if (!(delta_t > 0.0)) throw ConfigError("layout.delta_t", "must be positive");
  if (!(visibility >= 0.0 && visibility <= 1.0)) throw ConfigError("layout.visibility", "must lie in [0, 1]");
}

qcore::MeasurementSetting OpticalLayout::alice() const {
  return {phi_a, switch_a, long_bin_a.value_or(switch_phase_profile(TimeBin::L, switch_a)), scheme};
}

qcore::MeasurementSetting OpticalLayout::bob() const {
  return {phi_b, switch_b, long_bin_b.value_or(switch_phase_profile(TimeBin::L, switch_b)), scheme};
}

double SlotOutcomeDistribution::total() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

double SlotOutcomeDistribution::slot_pair(Slot sa, Slot sb) const {
  double w = 0.0;
  for (Outcome a : qcore::kOutcomes)
    for (Outcome b : qcore::kOutcomes) w += (*this)(sa, a, sb, b);
  return w;
}

std::array<std::array<double, 2>, 2> SlotOutcomeDistribution::conditional(Slot sa, Slot sb) const {
  const double w = slot_pair(sa, sb);
  if (!(w > 0.0)) throw DomainError("conditioning on a slot pair of zero probability");
  std::array<std::array<double, 2>, 2> out{};
  for (Outcome a : qcore::kOutcomes)
    for (Outcome b : qcore::kOutcomes) out[outcome_index(a)][outcome_index(b)] = (*this)(sa, a, sb, b) / w;
  return out;
}

double SlotOutcomeDistribution::full_correlation() const {
  double e = 0.0;
  for (Slot sa : kSlots)
    for (Slot sb : kSlots)
      for (Outcome a : qcore::kOutcomes)
        for (Outcome b : qcore::kOutcomes) e += qcore::sign(a) * qcore::sign(b) * (*this)(sa, a, sb, b);
  return e;
}

std::array<double, 3> SlotOutcomeDistribution::party_marginal(Party p) const {
  std::array<double, 3> w{};
  for (Slot sa : kSlots)
    for (Slot sb : kSlots) {
      const double v = slot_pair(sa, sb);
      w[slot_index(p == Party::Alice ? sa : sb)] += v;
    }
  return w;
}

std::pair<double, double> balanced_mzi_split(double phi_m) {
  const double c = std::cos(phi_m / 2.0);
  const double s = std::sin(phi_m / 2.0);
  return {c * c, s * s};
}

double switch_phase_profile(TimeBin bin, double phi_s) { return bin == TimeBin::S ? phi_s : phi_s - qcore::kPi; }

std::complex<double> detection_amplitude(const qcore::MeasurementSetting& s, TimeBin bin, Slot slot, Outcome a) {
  const auto arm = arm_for(bin, slot);
  if (!arm) return 0.0;
  return router_amplitude(s, bin, *arm) * analyzer_amplitude(s, *arm, a);
}

SlotOutcomeDistribution joint_distribution(const OpticalLayout& layout) {
  layout.validate();
  const qcore::PairState rho = qcore::bell_state(layout.visibility);
  const auto alice = layout.alice();
  const auto bob = layout.bob();
  constexpr TimeBin kBins[2] = {TimeBin::S, TimeBin::L};

  SlotOutcomeDistribution dist;
  for (Slot sa : kSlots)
    for (Outcome a : qcore::kOutcomes)
      for (Slot sb : kSlots)
        for (Outcome b : qcore::kOutcomes) {
          // Product amplitudes over the pair basis (SS, SL, LS, LL).
          Eigen::Vector4cd u;
          for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y)
              u(2 * x + y) = detection_amplitude(alice, kBins[x], sa, a) * detection_amplitude(bob, kBins[y], sb, b);
          const double p = (u.transpose() * rho.density * u.conjugate()).value().real();
          dist(sa, a, sb, b) = p < 0.0 ? 0.0 : p;
        }
  return dist;
}

std::array<double, 3> detector_histogram(const OpticalLayout& layout, Party party) {
  return joint_distribution(layout).party_marginal(party);
}

}  // namespace tbell::optics
