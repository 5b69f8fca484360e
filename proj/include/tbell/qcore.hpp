#pragma once

// Exact two-qubit model of a time-bin photon pair.
//
// Single-photon basis order is (|S>, |L>); the pair basis is
// (|SS>, |SL>, |LS>, |LL>) with Alice as the left tensor factor.

#include <Eigen/Dense>

#include <complex>
#include <numbers>

namespace tbell::qcore {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Matrix4 = Eigen::Matrix4cd;

inline constexpr double kPi = std::numbers::pi;

enum class Outcome : int { Plus = +1, Minus = -1 };

constexpr int sign(Outcome a) noexcept { return static_cast<int>(a); }
constexpr Outcome flip(Outcome a) noexcept { return a == Outcome::Plus ? Outcome::Minus : Outcome::Plus; }
inline constexpr Outcome kOutcomes[2] = {Outcome::Plus, Outcome::Minus};

/// Outcome from a +1/-1 integer. Throws DomainError on anything else.
Outcome outcome_from_int(int a);

enum class Scheme {
  PassivePostselected,  ///< central-slot coincidences only: projectors P_a
  PassiveFull,          ///< all three slots kept: POVM Gamma_a
  ActiveSwitch,         ///< balanced-MZI switch in front of the analyzer: POVM Pi_a
};

struct PairState {
  Matrix4 density;
  double visibility = 1.0;
};

/// Per-party measurement configuration.
struct MeasurementSetting {
  double analyzer_phase = 0.0;
  double switch_phase = kPi;    ///< phase seen by the |S> pulse in the switch
  double long_bin_phase = 0.0;  ///< phase seen by the |L> pulse; nominally switch_phase - pi
  Scheme scheme = Scheme::PassivePostselected;

  static MeasurementSetting passive(double phi, Scheme scheme = Scheme::PassivePostselected) {
    return {phi, kPi, 0.0, scheme};
  }
  /// Active switch with the long-bin phase tied to switch_phase - pi.
  static MeasurementSetting active(double phi, double switch_phase = kPi) {
    return {phi, switch_phase, switch_phase - kPi, Scheme::ActiveSwitch};
  }
};

/// Analyzer angles for the four CHSH terms.
struct ChshAngles {
  double a = -kPi / 4;
  double a_prime = kPi / 4;
  double b = 0.0;
  double b_prime = kPi / 2;

  friend bool operator==(const ChshAngles&, const ChshAngles&) = default;
};

/// rho = V |Phi+><Phi+| + (1 - V)(|SS><SS| + |LL><LL|)/2.
PairState bell_state(double visibility);

/// |psi_a><psi_a| with |psi_a> = (|S> + a e^{i phi} |L>)/sqrt(2).
Matrix2 projector_psi(Outcome a, double phi);

/// Gamma_a = 1/4 + P_a/2: the analyzer seen without slot postselection.
Matrix2 povm_gamma(Outcome a, double phi);

/// Pi_a for arbitrary switch phases (phi_s on |S>, phi_l on |L>):
///   Pi_a = 1/2 (cos^2(phi_s/2)|S><S| + sin^2(phi_l/2)|L><L|) + |chi_a><chi_a|
///   |chi_a> = (i e^{-i phi_s/2} sin(phi_s/2)|S> + a e^{i(phi - phi_l/2)} cos(phi_l/2)|L>)/sqrt(2)
Matrix2 povm_pi(Outcome a, double phi, double phi_s, double phi_l);

/// |chi_a> from povm_pi, exposed for tests of the operator decomposition.
Eigen::Vector2cd chi_vector(Outcome a, double phi, double phi_s, double phi_l);

/// POVM element selected by the setting's scheme.
Matrix2 povm_element(const MeasurementSetting& setting, Outcome a);

/// Kronecker product, Alice on the left.
Matrix4 kron(const Matrix2& a, const Matrix2& b);

bool is_hermitian(const Matrix2& m, double tol = 1e-12);
double min_eigenvalue(const Matrix2& m);
double max_eigenvalue(const Matrix2& m);

/// tr(rho (E_A (x) E_B)). Throws DomainError unless both elements satisfy 0 <= E <= 1.
double joint_probability(const PairState& rho, const Matrix2& e_a, const Matrix2& e_b);

/// E = sum_ab ab P_ab using the POVM family of each party's scheme.
double correlation(const PairState& rho, const MeasurementSetting& alice, const MeasurementSetting& bob);

/// S = E(a,b) + E(a',b) + E(a,b') - E(a',b'). The analyzer phases of the base
/// settings are replaced by the four angles; all other fields are kept.
double chsh(const PairState& rho, const ChshAngles& angles, const MeasurementSetting& alice_base,
            const MeasurementSetting& bob_base);

/// Same, with nominal switch phases (phi_S = pi, phi_L = 0) for both parties.
double chsh(const PairState& rho, const ChshAngles& angles, Scheme scheme);

}  // namespace tbell::qcore
