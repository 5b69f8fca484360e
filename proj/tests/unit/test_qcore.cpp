#include "tbell/error.hpp"
#include "tbell/qcore.hpp"
#include "util.hpp"

#include <doctest.h>

using namespace tbell;
using namespace tbell::qcore;
using testutil::max_abs_diff;
using testutil::phase_grid;

namespace {

const Complex kI{0.0, 1.0};

// Direct trace of rho (A (x) B), written out over the 16 basis products.
double trace_oracle(const Matrix4& rho, const Matrix2& a, const Matrix2& b) {
  Complex t = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) t += rho(2 * k + l, 2 * i + j) * a(i, k) * b(j, l);
  return t.real();
}

double correlation_oracle(const Matrix4& rho, const Matrix2& a_plus, const Matrix2& a_minus, const Matrix2& b_plus,
                          const Matrix2& b_minus) {
  return trace_oracle(rho, a_plus - a_minus, b_plus - b_minus);
}

}  // namespace

TEST_SUITE("qcore") {
  TEST_CASE("bell_state pure and dephased limits") {
    const auto pure = bell_state(1.0).density;
    CHECK(std::abs(pure.trace() - 1.0) < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix4> es(pure);
    CHECK(es.eigenvalues()(3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(es.eigenvalues()(2)) < 1e-12);

    const auto mixed = bell_state(0.0).density;
    Matrix4 expect = Matrix4::Zero();
    expect(0, 0) = 0.5;
    expect(3, 3) = 0.5;
    CHECK((mixed - expect).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("bell_state coherence equals V/2 and state is PSD") {
    for (double v : {0.0, 0.1, 0.5, 0.89, 0.95, 1.0}) {
      const auto rho = bell_state(v).density;
      CHECK(std::abs(rho(0, 3) - Complex(v / 2.0)) < 1e-15);
      CHECK(std::abs(rho.trace() - 1.0) < 1e-12);
      Eigen::SelfAdjointEigenSolver<Matrix4> es(rho);
      CHECK(es.eigenvalues().minCoeff() > -1e-12);
    }
  }

  TEST_CASE("bell_state rejects V outside [0,1]") {
    CHECK_THROWS_AS(bell_state(-0.01), DomainError);
    CHECK_THROWS_AS(bell_state(1.01), DomainError);
  }

  TEST_CASE("projector examples") {
    Matrix2 half;
    half << 0.5, 0.5, 0.5, 0.5;
    CHECK(max_abs_diff(projector_psi(Outcome::Plus, 0.0), half) < 1e-15);
    // <S|P|L> = a e^{-i phi}/2 = -(-i)/2
    CHECK(std::abs(projector_psi(Outcome::Minus, kPi / 2)(0, 1) - kI / 2.0) < 1e-15);
    for (double phi : phase_grid(32)) {
      CHECK(max_abs_diff(projector_psi(Outcome::Plus, phi) + projector_psi(Outcome::Minus, phi), Matrix2::Identity()) <
            1e-12);
    }
  }

  TEST_CASE("Gamma completeness, trace and spectrum") {
    for (double phi : phase_grid(32)) {
      const auto gp = povm_gamma(Outcome::Plus, phi);
      const auto gm = povm_gamma(Outcome::Minus, phi);
      CHECK(max_abs_diff(gp + gm, Matrix2::Identity()) < 1e-12);
      CHECK(std::abs(gp.trace() - 1.0) < 1e-12);
      CHECK(min_eigenvalue(gp) == doctest::Approx(0.25).epsilon(1e-12));
      CHECK(max_eigenvalue(gp) == doctest::Approx(0.75).epsilon(1e-12));
      const Matrix2 identity_form = 0.25 * Matrix2::Identity() + 0.5 * projector_psi(Outcome::Plus, phi);
      CHECK(max_abs_diff(gp, identity_form) < 1e-12);
    }
  }

  TEST_CASE("Pi reduces to the projector at phi_S = pi, phi_L = 0") {
    for (double phi : phase_grid(32)) {
      for (Outcome a : kOutcomes) CHECK(max_abs_diff(povm_pi(a, phi, kPi, 0.0), projector_psi(a, phi)) < 1e-12);
    }
  }

  TEST_CASE("Pi is analyzer-blind at phi_S = 0, phi_L = -pi") {
    for (double phi : phase_grid(8)) {
      CHECK(max_abs_diff(povm_pi(Outcome::Plus, phi, 0.0, -kPi), 0.5 * Matrix2::Identity()) < 1e-12);
      CHECK(chi_vector(Outcome::Plus, phi, 0.0, -kPi).norm() < 1e-12);
    }
  }

  TEST_CASE("Pi completeness and positivity for arbitrary switch phases") {
    for (double ps : phase_grid(12)) {
      for (double pl : phase_grid(12)) {
        for (double phi : phase_grid(6)) {
          const auto p = povm_pi(Outcome::Plus, phi, ps, pl);
          const auto m = povm_pi(Outcome::Minus, phi, ps, pl);
          CHECK(max_abs_diff(p + m, Matrix2::Identity()) < 1e-12);
          CHECK(is_hermitian(p));
          CHECK(min_eigenvalue(p) >= -1e-12);
          CHECK(min_eigenvalue(m) >= -1e-12);
        }
      }
    }
  }

  TEST_CASE("Pi at phi_S - phi_L = pi matches the closed form") {
    for (double ps : phase_grid(32)) {
      const double c = std::cos(ps / 2.0);
      const double s = std::sin(ps / 2.0);
      for (double phi : phase_grid(8)) {
        for (Outcome a : kOutcomes) {
          const Matrix2 closed = 0.5 * c * c * Matrix2::Identity() + s * s * projector_psi(a, phi);
          CHECK(max_abs_diff(povm_pi(a, phi, ps, ps - kPi), closed) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("active default keeps phi_S - phi_L = pi") {
    for (double ps : phase_grid(8)) {
      const auto m = MeasurementSetting::active(0.3, ps);
      CHECK(std::remainder(m.switch_phase - m.long_bin_phase - kPi, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }

  TEST_CASE("joint probability matches 1/4 [1 + ab V cos(phi_A + phi_B)]") {
    for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const auto rho = bell_state(v);
      for (double pa : phase_grid(16)) {
        for (double pb : phase_grid(16)) {
          for (Outcome a : kOutcomes) {
            for (Outcome b : kOutcomes) {
              const double expect = 0.25 * (1.0 + sign(a) * sign(b) * v * std::cos(pa + pb));
              const double p = joint_probability(rho, projector_psi(a, pa), projector_psi(b, pb));
              CHECK(std::abs(p - expect) < 1e-12);
            }
          }
        }
      }
    }
    CHECK(joint_probability(bell_state(1.0), projector_psi(Outcome::Plus, 0), projector_psi(Outcome::Plus, 0)) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("joint probability agrees with an explicit trace") {
    const auto rho = bell_state(0.7);
    for (double pa : phase_grid(6)) {
      for (double pb : phase_grid(6)) {
        const auto ea = povm_pi(Outcome::Plus, pa, 2.1, 0.4);
        const auto eb = povm_gamma(Outcome::Minus, pb);
        CHECK(std::abs(joint_probability(rho, ea, eb) - trace_oracle(rho.density, ea, eb)) < 1e-12);
      }
    }
  }

  TEST_CASE("joint probability rejects non-POVM elements") {
    const auto rho = bell_state(1.0);
    CHECK_THROWS_AS(joint_probability(rho, 2.0 * Matrix2::Identity(), Matrix2::Identity()), DomainError);
    Matrix2 nonherm;
    nonherm << 0.5, 0.5, 0.0, 0.5;
    CHECK_THROWS_AS(joint_probability(rho, nonherm, Matrix2::Identity()), DomainError);
  }

  TEST_CASE("Gamma correlation is cos/4") {
    const auto rho = bell_state(1.0);
    for (double pa : phase_grid(8)) {
      for (double pb : phase_grid(8)) {
        const double e = correlation_oracle(rho.density, povm_gamma(Outcome::Plus, pa), povm_gamma(Outcome::Minus, pa),
                                            povm_gamma(Outcome::Plus, pb), povm_gamma(Outcome::Minus, pb));
        CHECK(std::abs(e - 0.25 * std::cos(pa + pb)) < 1e-12);
        const auto full = MeasurementSetting::passive(pa, Scheme::PassiveFull);
        const auto fullb = MeasurementSetting::passive(pb, Scheme::PassiveFull);
        CHECK(std::abs(correlation(rho, full, fullb) - e) < 1e-12);
      }
    }
  }

  TEST_CASE("correlation examples") {
    const auto rho = bell_state(1.0);
    CHECK(correlation(rho, MeasurementSetting::passive(0.0), MeasurementSetting::passive(0.0)) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(correlation(rho, MeasurementSetting::passive(0.0, Scheme::PassiveFull),
                      MeasurementSetting::passive(0.0, Scheme::PassiveFull)) == doctest::Approx(0.25).epsilon(1e-12));
    for (double pa : phase_grid(8)) {
      for (double pb : phase_grid(8)) {
        CHECK(std::abs(correlation(rho, MeasurementSetting::active(pa), MeasurementSetting::active(pb)) -
                       correlation(rho, MeasurementSetting::passive(pa), MeasurementSetting::passive(pb))) < 1e-12);
      }
    }
  }

  TEST_CASE("active correlation with equal switch phases is V sin^2 sin^2 cos") {
    for (double v : {0.6, 1.0}) {
      const auto rho = bell_state(v);
      for (double ps : phase_grid(16)) {
        for (double pa : phase_grid(4)) {
          for (double pb : phase_grid(4)) {
            const double pl = ps - kPi;
            const double oracle =
                correlation_oracle(rho.density, povm_pi(Outcome::Plus, pa, ps, pl), povm_pi(Outcome::Minus, pa, ps, pl),
                                   povm_pi(Outcome::Plus, pb, ps, pl), povm_pi(Outcome::Minus, pb, ps, pl));
            const double s2 = std::pow(std::sin(ps / 2.0), 2);
            CHECK(std::abs(oracle - v * s2 * s2 * std::cos(pa + pb)) < 1e-12);
            CHECK(std::abs(correlation(rho, MeasurementSetting::active(pa, ps), MeasurementSetting::active(pb, ps)) -
                           oracle) < 1e-12);
          }
        }
      }
    }
  }

  TEST_CASE("CHSH examples") {
    const ChshAngles angles;
    CHECK(chsh(bell_state(1.0), angles, Scheme::PassivePostselected) ==
          doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::abs(chsh(bell_state(1.0 / std::sqrt(2.0)), angles, Scheme::PassivePostselected) - 2.0) < 1e-9);
    CHECK(std::abs(chsh(bell_state(1.0), angles, Scheme::PassiveFull) - std::sqrt(2.0) / 2.0) < 1e-9);
    CHECK(std::abs(chsh(bell_state(0.89), angles, Scheme::ActiveSwitch) - 2.0 * std::sqrt(2.0) * 0.89) < 1e-12);
  }

  TEST_CASE("CHSH is nondecreasing in V") {
    double last = -1.0;
    for (int i = 0; i <= 50; ++i) {
      const double s = chsh(bell_state(i / 50.0), ChshAngles{}, Scheme::PassivePostselected);
      CHECK(s >= last - 1e-12);
      last = s;
    }
  }

  TEST_CASE("outcome_from_int") {
    CHECK(outcome_from_int(1) == Outcome::Plus);
    CHECK(outcome_from_int(-1) == Outcome::Minus);
    CHECK_THROWS_AS(outcome_from_int(0), DomainError);
  }
}
