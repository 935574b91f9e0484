#include <doctest.h>

#include <cmath>
#include <random>

#include "pivc/plants.hpp"
#include "pivc/signal.hpp"

using namespace pivc;

TEST_CASE("flexible joint without modes is the damped rigid body") {
  FlexibleJointParams p;
  p.motor_inertia = 0.02;
  p.motor_damping = 0.1;
  const ContinuousTf m = flexible_joint_plant(p);
  CHECK(std::abs(freq_response(m, 0.0)(0, 0) - 10.0) < 1e-12);  // 1/b
  const auto rep = is_positive_real(m, 2001);
  CHECK(rep.verdict);
}

TEST_CASE("flexible joint order and preset resonance ordering") {
  const ContinuousTf lp = flexible_joint_plant(long_plate_preset());
  CHECK(poly_trim(lp.entry(0, 0).den).size() == 6);  // order 1 + 2*2
  const auto f_long = resonance_frequencies(lp);
  const auto f_short = resonance_frequencies(flexible_joint_plant(short_plate_preset()));
  REQUIRE(f_long.size() >= 2);
  REQUIRE(f_short.size() >= 2);
  CHECK(f_short[0] / f_long[0] > 1.5);
  CHECK(f_long[0] == doctest::Approx(8.0).epsilon(0.1));
  CHECK(f_long[1] == doctest::Approx(25.0).epsilon(0.1));
}

TEST_CASE("all bundled plants are positive real on a dense grid") {
  CHECK(is_positive_real(flexible_joint_plant(long_plate_preset()), 10001).verdict);
  CHECK(is_positive_real(flexible_joint_plant(short_plate_preset()), 10001).verdict);
  CHECK(is_positive_real(coupled_cartesian_plant(cartesian3_preset()), 10001).verdict);
}

TEST_CASE("coupled cartesian decoupled case gives three first-order lags") {
  CoupledCartesianParams p;
  p.inertia = Eigen::Vector3d(2.0, 1.0, 3.0).asDiagonal();
  p.damping = Eigen::Vector3d(4.0, 5.0, 6.0).asDiagonal();
  p.stiffness.setZero();
  const ContinuousTf m = coupled_cartesian_plant(p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) {
        const auto g = freq_response(m, 1.3);
        const std::complex<double> expect =
            1.0 / (p.inertia(i, i) * std::complex<double>(0.0, 1.3) + p.damping(i, i));
        CHECK(std::abs(g(i, i) - expect) < 1e-9);
      } else {
        CHECK(m.entry(i, j).is_zero());
      }
    }
}

TEST_CASE("cartesian coupling moves the off axes") {
  const ContinuousTf m = coupled_cartesian_plant(cartesian3_preset());
  const double ts = 1e-3;
  const DiscreteSs d = discretize(m, ts, Discretization::Zoh);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3000, 3);
  u.col(0).setOnes();  // step force on x only
  const Signal y = simulate_lti(d, Signal(ts, u));
  const double vx = y.samples.col(0).cwiseAbs().maxCoeff();
  const double vy = y.samples.col(1).cwiseAbs().maxCoeff();
  CHECK(vy > 0.01 * vx);
}

TEST_CASE("cartesian Hermitian part is PSD across the grid") {
  const auto rep = is_positive_real(coupled_cartesian_plant(cartesian3_preset()), 4001);
  CHECK(rep.verdict);
  CHECK(rep.min_eig >= -1e-9);
}

TEST_CASE("random passive plants: grid check, first-order case, seed variety") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 99ull}) {
    const DiscreteSs p = random_passive_plant(seed, 6, 2);
    const auto rep = is_positive_real(p, 10001);
    CHECK(rep.verdict);
  }
  const DiscreteSs first = random_passive_plant(5, 1, 1);
  CHECK(first.states() == 1);
  CHECK(is_positive_real(first, 2001).verdict);

  const DiscreteSs a = random_passive_plant(10, 4, 1);
  const DiscreteSs b = random_passive_plant(11, 4, 1);
  Eigen::MatrixXd impulse = Eigen::MatrixXd::Zero(50, 1);
  impulse(0, 0) = 1.0;
  const Signal ya = simulate_lti(a, Signal(1e-3, impulse));
  const Signal yb = simulate_lti(b, Signal(1e-3, impulse));
  CHECK((ya.samples - yb.samples).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("is_positive_real analytic cases") {
  const ContinuousTf gain = ContinuousTf::siso({3.0}, {1.0});
  const auto rep = is_positive_real(gain, 101);
  CHECK(rep.verdict);
  CHECK(rep.min_eig == doctest::Approx(6.0).epsilon(1e-12));

  CHECK(is_positive_real(ContinuousTf::siso({1.0}, {0.02, 0.1}), 2001).verdict);

  // Differencer 1 - z^-1: F(theta) = 2(1 - cos theta) >= 0, zero at theta = 0.
  DiscreteSs diff;
  diff.a = Eigen::MatrixXd::Zero(1, 1);
  diff.b = Eigen::MatrixXd::Ones(1, 1);
  diff.c = -Eigen::MatrixXd::Ones(1, 1);
  diff.d = Eigen::MatrixXd::Ones(1, 1);
  diff.sample_period_s = 0.01;
  const auto drep = is_positive_real(diff, 5001);
  CHECK(drep.verdict);
  CHECK(drep.min_eig == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(drep.argmin_omega == doctest::Approx(0.0));
}

TEST_CASE("is_positive_real rejects unstable models") {
  const ContinuousTf unstable = ContinuousTf::siso({1.0}, {1.0, -1.0});
  CHECK_THROWS_AS(is_positive_real(unstable, 101), std::invalid_argument);
  DiscreteSs d;
  d.a = 1.5 * Eigen::MatrixXd::Ones(1, 1);
  d.b = d.c = d.d = Eigen::MatrixXd::Ones(1, 1);
  d.sample_period_s = 0.01;
  CHECK_THROWS_AS(is_positive_real(d, 101), std::invalid_argument);
}

TEST_CASE("nonpositive parameters are rejected") {
  FlexibleJointParams p;
  p.motor_inertia = -1.0;
  CHECK_THROWS_AS(flexible_joint_plant(p), std::invalid_argument);
  CoupledCartesianParams c;
  c.inertia.setZero();
  CHECK_THROWS_AS(coupled_cartesian_plant(c), std::invalid_argument);
}

TEST_CASE("cumulative supply from rest is nonnegative for tustin-passive plants") {
  // Tustin preserves the discrete supply inequality; random plants are
  // built that way, and the preset plants pass after tustin discretization.
  const double ts = 1e-3;
  std::mt19937_64 rng(123);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    const DiscreteSs p = random_passive_plant(200 + static_cast<std::uint64_t>(trial), 5, 1);
    Eigen::MatrixXd u(4000, 1);
    for (Eigen::Index k = 0; k < u.rows(); ++k) u(k, 0) = g(rng);
    const Signal us(ts, u);
    const Signal y = simulate_lti(p, us);
    CHECK(min_prefix_supply(us, y) >= -1e-9);
  }
  const DiscreteSs lp = discretize(flexible_joint_plant(long_plate_preset()), ts, Discretization::Tustin);
  Eigen::MatrixXd u(5000, 1);
  for (Eigen::Index k = 0; k < u.rows(); ++k) u(k, 0) = g(rng);
  const Signal us(ts, u);
  CHECK(min_prefix_supply(us, simulate_lti(lp, us)) >= -1e-9);
}
