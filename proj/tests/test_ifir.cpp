#include <doctest.h>

#include <cmath>
#include <random>

#include "pivc/ifir.hpp"
#include "pivc/lti.hpp"

using namespace pivc;

namespace {

IfirParams siso(std::vector<double> taps, double gamma, double ts = 0.005) {
  IfirParams p;
  for (double h : taps) p.taps.push_back(Eigen::MatrixXd::Constant(1, 1, h));
  p.gamma = Eigen::MatrixXd::Constant(1, 1, gamma);
  p.sample_period_s = ts;
  return p;
}

Signal siso_signal(const std::vector<double>& v, double ts = 0.005) {
  Eigen::MatrixXd data(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) data(static_cast<Eigen::Index>(i), 0) = v[i];
  return Signal(ts, data);
}

}  // namespace

TEST_CASE("eval_ifir identity, integral of step, impulse readout") {
  IfirParams ident;
  ident.taps.push_back(Eigen::MatrixXd::Identity(2, 2));
  ident.gamma = Eigen::MatrixXd::Zero(2, 2);
  ident.sample_period_s = 0.01;
  Eigen::MatrixXd e(4, 2);
  e << 1, -1, 2, 0.5, 0, 3, -2, 1;
  const Signal es(0.01, e);
  CHECK((eval_ifir(ident, es).samples - e).cwiseAbs().maxCoeff() == 0.0);

  const IfirParams integ = siso({0.0}, 1.0, 0.005);
  const Signal step = siso_signal(std::vector<double>(10, 1.0));
  const Signal u = eval_ifir(integ, step);
  for (Eigen::Index k = 0; k < 10; ++k)
    CHECK(u.samples(k, 0) == doctest::Approx(0.005 * (static_cast<double>(k) + 1.0)).epsilon(1e-12));

  const IfirParams fir = siso({1.0, 0.5}, 0.0);
  const Signal imp = siso_signal({1.0, 0.0, 0.0, 0.0});
  const Signal y = eval_ifir(fir, imp);
  CHECK(y.samples(0, 0) == doctest::Approx(1.0));
  CHECK(y.samples(1, 0) == doctest::Approx(0.5));
  CHECK(y.samples(2, 0) == doctest::Approx(0.0));
  CHECK(y.samples(3, 0) == doctest::Approx(0.0));
}

TEST_CASE("eval_ifir is linear") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  IfirParams p;
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXd h(2, 2);
    for (int i = 0; i < 4; ++i) h(i / 2, i % 2) = g(rng);
    p.taps.push_back(h);
  }
  Eigen::MatrixXd gm(2, 2);
  for (int i = 0; i < 4; ++i) gm(i / 2, i % 2) = g(rng);
  p.gamma = gm;
  p.sample_period_s = 0.005;

  Eigen::MatrixXd e1(30, 2), e2(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i)
    for (int j = 0; j < 2; ++j) {
      e1(i, j) = g(rng);
      e2(i, j) = g(rng);
    }
  const double a = 1.7, b = -0.4;
  const Signal mixed(0.005, a * e1 + b * e2);
  const Signal ya = eval_ifir(p, Signal(0.005, e1));
  const Signal yb = eval_ifir(p, Signal(0.005, e2));
  const Signal ym = eval_ifir(p, mixed);
  CHECK((ym.samples - a * ya.samples - b * yb.samples).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("popov_function closed forms") {
  const IfirParams ident = [] {
    IfirParams p;
    p.taps.push_back(Eigen::MatrixXd::Identity(3, 3));
    p.gamma = Eigen::MatrixXd::Zero(3, 3);
    p.sample_period_s = 0.005;
    return p;
  }();
  for (double theta : {0.0, 0.3, 2.0, M_PI}) {
    const Eigen::MatrixXcd f = popov_function(ident, theta);
    CHECK((f - 2.0 * Eigen::MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
  }

  const IfirParams p = siso({1.0, 0.5}, 0.0);
  CHECK(popov_function(p, 0.0)(0, 0).real() == doctest::Approx(3.0));
  CHECK(popov_function(p, M_PI)(0, 0).real() == doctest::Approx(1.0));
  for (double theta : {0.0, 0.7, 1.9}) {
    CHECK(popov_function(p, theta)(0, 0).real() ==
          doctest::Approx(2.0 * (1.0 + 0.5 * std::cos(theta))).epsilon(1e-12));
  }
}

TEST_CASE("popov_function is linear in the taps") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  auto rand_params = [&] {
    IfirParams p;
    for (int k = 0; k < 3; ++k) {
      Eigen::MatrixXd h(2, 2);
      for (int i = 0; i < 4; ++i) h(i / 2, i % 2) = g(rng);
      p.taps.push_back(h);
    }
    p.gamma = Eigen::MatrixXd::Zero(2, 2);
    p.sample_period_s = 0.01;
    return p;
  };
  const IfirParams a = rand_params();
  const IfirParams b = rand_params();
  IfirParams sum = a;
  for (int k = 0; k < 3; ++k) sum.taps[static_cast<std::size_t>(k)] += b.taps[static_cast<std::size_t>(k)];
  for (double theta : {0.2, 1.4, 3.0}) {
    const Eigen::MatrixXcd lhs = popov_function(sum, theta);
    const Eigen::MatrixXcd rhs = popov_function(a, theta) + popov_function(b, theta);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("passivity_margin verdicts for canonical tap patterns") {
  const auto ident = passivity_margin(siso({1.0}, 1.0), 10001);
  CHECK(ident.verdict);
  CHECK(ident.fir_min_eig == doctest::Approx(2.0));

  const auto differ = passivity_margin(siso({1.0, -1.0}, 0.0), 10001);
  CHECK(differ.verdict);
  CHECK(differ.fir_min_eig == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(differ.argmin_theta == doctest::Approx(0.0));

  const auto delay = passivity_margin(siso({0.0, 1.0}, 0.0), 10001);
  CHECK_FALSE(delay.verdict);
  CHECK(delay.fir_min_eig == doctest::Approx(-2.0).epsilon(1e-9));

  IfirParams neg_gamma = siso({1.0}, -0.5);
  const auto ng = passivity_margin(neg_gamma, 101);
  CHECK_FALSE(ng.verdict);
  CHECK(ng.gamma_min_eig == doctest::Approx(-1.0));
}

TEST_CASE("popov min-eig is superadditive under tap sums") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 25; ++trial) {
    IfirParams a, b;
    const int m = 4;
    for (int k = 0; k < m; ++k) {
      Eigen::MatrixXd ha(2, 2), hb(2, 2);
      for (int i = 0; i < 4; ++i) {
        ha(i / 2, i % 2) = g(rng);
        hb(i / 2, i % 2) = g(rng);
      }
      a.taps.push_back(ha);
      b.taps.push_back(hb);
    }
    a.gamma = b.gamma = Eigen::MatrixXd::Zero(2, 2);
    a.sample_period_s = b.sample_period_s = 0.005;
    IfirParams sum = a;
    for (int k = 0; k < m; ++k) sum.taps[static_cast<std::size_t>(k)] += b.taps[static_cast<std::size_t>(k)];
    const double ma = passivity_margin(a, 801).fir_min_eig;
    const double mb = passivity_margin(b, 801).fir_min_eig;
    const double ms = passivity_margin(sum, 801).fir_min_eig;
    CHECK(ms >= ma + mb - 1e-9);
  }
}

TEST_CASE("epsilon_bound closed form, edge cases and monotonicity") {
  CHECK(epsilon_bound(1, 100, 1.5, 0.5) == doctest::Approx(0.0));
  CHECK(epsilon_bound(2, 100, 1.0, 0.5) == doctest::Approx(M_PI * 0.01 * 0.75 / 0.5).epsilon(1e-12));
  CHECK(epsilon_bound(2, 100, 1.0, 0.5) == doctest::Approx(0.04712).epsilon(1e-3));

  double prev = epsilon_bound(8, 4, 1.2, 0.7);
  for (int grid : {8, 16, 64, 256}) {
    const double cur = epsilon_bound(8, grid, 1.2, 0.7);
    CHECK(cur < prev);
    prev = cur;
  }
  prev = epsilon_bound(1, 64, 1.2, 0.7);
  for (int m : {2, 4, 16, 64}) {
    const double cur = epsilon_bound(m, 64, 1.2, 0.7);
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(epsilon_bound(0, 10, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_bound(3, 1, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_bound(3, 10, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_bound(3, 10, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("ifir frequency response matches tap transfer plus integral term") {
  // Cross-check eval_ifir against the z-domain value on a pure tone.
  const IfirParams p = siso({0.8, 0.3, 0.1}, 2.0, 0.005);
  const double omega = 30.0;
  const double ts = p.sample_period_s;
  const double duration = 60.0 * 2.0 * M_PI / omega;
  const auto n = static_cast<Eigen::Index>(duration / ts);
  Eigen::MatrixXd e(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) e(k, 0) = std::sin(omega * static_cast<double>(k) * ts);
  const Signal es(ts, e);
  const Signal u = eval_ifir(p, es);
  DftOptions opts;
  opts.discard_fraction = 0.5;  // long discard so the integral transient dies out
  const BodePoint pt = dft_gain_phase(es, u, omega, opts);

  const std::complex<double> z = std::exp(std::complex<double>(0, omega * ts));
  std::complex<double> expect = 2.0 * ts * z / (z - 1.0);
  std::complex<double> zk(1.0, 0.0);
  for (double h : {0.8, 0.3, 0.1}) {
    expect += h * zk;
    zk /= z;
  }
  CHECK(pt.gain == doctest::Approx(std::abs(expect)).epsilon(1e-6));
  CHECK(std::abs(std::arg(pt.channel_response(0) / expect)) < 1e-6);
}

TEST_CASE("ifir_to_ss agrees with eval_ifir") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  IfirParams p;
  for (int k = 0; k < 5; ++k) {
    Eigen::MatrixXd h(2, 2);
    for (int i = 0; i < 4; ++i) h(i / 2, i % 2) = g(rng);
    p.taps.push_back(h);
  }
  Eigen::MatrixXd gm(2, 2);
  gm << 1.0, 0.2, 0.2, 0.8;
  p.gamma = gm;
  p.sample_period_s = 0.01;
  Eigen::MatrixXd e(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i)
    for (int j = 0; j < 2; ++j) e(i, j) = g(rng);
  const Signal es(0.01, e);
  const Signal direct = eval_ifir(p, es);
  const Signal via_ss = simulate_lti(ifir_to_ss(p), es);
  CHECK((direct.samples - via_ss.samples).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("controller JSON round trip with certificate") {
  const IfirParams p = siso({1.0, 0.25}, 0.5);
  PassivityCertificate cert = passivity_margin(p, 101);
  cert.grid_size = 64;
  cert.epsilon = 0.01;
  cert.rho0 = 1.5;
  cert.rho = 0.8;
  const std::string text = ifir_to_json(p, cert);
  PassivityCertificate rc;
  const IfirParams rp = ifir_from_json(text, &rc);
  CHECK(rp.order() == 2);
  CHECK(rp.taps[1](0, 0) == doctest::Approx(0.25));
  CHECK(rp.gamma(0, 0) == doctest::Approx(0.5));
  CHECK(rc.verdict == cert.verdict);
  CHECK(rc.grid_size == 64);
  CHECK(rc.epsilon == doctest::Approx(0.01));
  CHECK(rc.dense_check_min_eig == doctest::Approx(cert.dense_check_min_eig));
}
