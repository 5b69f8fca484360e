#include "tbell/qcore.hpp"

#include "tbell/error.hpp"

#include <cmath>
#include <string>

namespace tbell::qcore {

namespace {

constexpr double kPsdTol = 1e-12;
const Complex kI{0.0, 1.0};

void require_effect(const Matrix2& m, const char* name) {
  if (!is_hermitian(m, kPsdTol)) throw DomainError(std::string(name) + " is not Hermitian");
  if (min_eigenvalue(m) < -kPsdTol) throw DomainError(std::string(name) + " is not positive semidefinite");
  if (max_eigenvalue(m) > 1.0 + kPsdTol) throw DomainError(std::string(name) + " exceeds the identity");
}

}  // namespace

Outcome outcome_from_int(int a) {
  if (a == 1) return Outcome::Plus;
  if (a == -1) return Outcome::Minus;
  throw DomainError("outcome must be +1 or -1, got " + std::to_string(a));
}

PairState bell_state(double visibility) {
  if (!(visibility >= 0.0 && visibility <= 1.0)) {
    throw DomainError("visibility must lie in [0, 1], got " + std::to_string(visibility));
  }
  Matrix4 rho = Matrix4::Zero();
  rho(0, 0) = 0.5;
  rho(3, 3) = 0.5;
  rho(0, 3) = visibility / 2.0;
  rho(3, 0) = visibility / 2.0;
  return {rho, visibility};
}

Matrix2 projector_psi(Outcome a, double phi) {
  Eigen::Vector2cd psi;
  psi << 1.0, static_cast<double>(sign(a)) * std::polar(1.0, phi);
  psi /= std::sqrt(2.0);
  return psi * psi.adjoint();
}

Matrix2 povm_gamma(Outcome a, double phi) {
  return 0.25 * Matrix2::Identity() + 0.5 * projector_psi(a, phi);
}

Eigen::Vector2cd chi_vector(Outcome a, double phi, double phi_s, double phi_l) {
  Eigen::Vector2cd chi;
  chi << kI * std::polar(1.0, -phi_s / 2.0) * std::sin(phi_s / 2.0),
      static_cast<double>(sign(a)) * std::polar(1.0, phi - phi_l / 2.0) * std::cos(phi_l / 2.0);
  return chi / std::sqrt(2.0);
}

Matrix2 povm_pi(Outcome a, double phi, double phi_s, double phi_l) {
  const double cs = std::cos(phi_s / 2.0);
  const double sl = std::sin(phi_l / 2.0);
  Matrix2 lateral = Matrix2::Zero();
  lateral(0, 0) = 0.5 * cs * cs;
  lateral(1, 1) = 0.5 * sl * sl;
  const Eigen::Vector2cd chi = chi_vector(a, phi, phi_s, phi_l);
  return lateral + chi * chi.adjoint();
}

Matrix2 povm_element(const MeasurementSetting& s, Outcome a) {
  switch (s.scheme) {
    case Scheme::PassivePostselected:
      return projector_psi(a, s.analyzer_phase);
    case Scheme::PassiveFull:
      return povm_gamma(a, s.analyzer_phase);
    case Scheme::ActiveSwitch:
      return povm_pi(a, s.analyzer_phase, s.switch_phase, s.long_bin_phase);
  }
  throw DomainError("unknown scheme");
}

Matrix4 kron(const Matrix2& a, const Matrix2& b) {
  Matrix4 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

bool is_hermitian(const Matrix2& m, double tol) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() < tol;
}

double min_eigenvalue(const Matrix2& m) {
  Eigen::SelfAdjointEigenSolver<Matrix2> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix2& m) {
  Eigen::SelfAdjointEigenSolver<Matrix2> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double joint_probability(const PairState& rho, const Matrix2& e_a, const Matrix2& e_b) {
  require_effect(e_a, "Alice's POVM element");
  require_effect(e_b, "Bob's POVM element");
  return (rho.density * kron(e_a, e_b)).trace().real();
}

double correlation(const PairState& rho, const MeasurementSetting& alice, const MeasurementSetting& bob) {
  double e = 0.0;
  for (Outcome a : kOutcomes) {
    const Matrix2 ea = povm_element(alice, a);
    for (Outcome b : kOutcomes) {
      e += sign(a) * sign(b) * joint_probability(rho, ea, povm_element(bob, b));
    }
  }
  return e;
}

double chsh(const PairState& rho, const ChshAngles& angles, const MeasurementSetting& alice_base,
            const MeasurementSetting& bob_base) {
  auto at = [](MeasurementSetting s, double phi) {
    s.analyzer_phase = phi;
    return s;
  };
  return correlation(rho, at(alice_base, angles.a), at(bob_base, angles.b)) +
         correlation(rho, at(alice_base, angles.a_prime), at(bob_base, angles.b)) +
         correlation(rho, at(alice_base, angles.a), at(bob_base, angles.b_prime)) -
         correlation(rho, at(alice_base, angles.a_prime), at(bob_base, angles.b_prime));
}

double chsh(const PairState& rho, const ChshAngles& angles, Scheme scheme) {
  MeasurementSetting base{0.0, kPi, 0.0, scheme};
  return chsh(rho, angles, base, base);
}

}  // namespace tbell::qcore
