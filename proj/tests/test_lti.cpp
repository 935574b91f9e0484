#include <doctest.h>

#include <cmath>

#include "pivc/lti.hpp"

using namespace pivc;

namespace {

// 10-90% rise and 2%-settling read off a simulated step response.
struct StepStats {
  double rise_10_90 = 0.0;
  double settle_2pct = 0.0;
  double overshoot_pct = 0.0;
  double peak = 0.0;
};

StepStats step_stats(const ContinuousTf& model, double duration, double ts = 1e-4) {
  const DiscreteSs d = discretize(model, ts, Discretization::Zoh);
  const auto n = static_cast<Eigen::Index>(duration / ts);
  const Signal u(ts, Eigen::MatrixXd::Ones(n, 1));
  const Signal y = simulate_lti(d, u);
  const double yf = y.samples(n - 1, 0);
  StepStats st;
  double t10 = -1.0, t90 = -1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = y.samples(k, 0);
    if (t10 < 0.0 && v >= 0.1 * yf) t10 = y.time_at(k);
    if (t90 < 0.0 && v >= 0.9 * yf) t90 = y.time_at(k);
  }
  st.rise_10_90 = t90 - t10;
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    if (std::abs(y.samples(k, 0) - yf) > 0.02 * std::abs(yf)) {
      st.settle_2pct = y.time_at(k + 1);
      break;
    }
  }
  st.peak = y.samples.col(0).maxCoeff();
  st.overshoot_pct = 100.0 * (st.peak - yf) / yf;
  return st;
}

}  // namespace

TEST_CASE("first_order_ref step characteristics and DC gain") {
  const ContinuousTf m = first_order_ref(0.05);
  const StepStats st = step_stats(m, 1.0);
  CHECK(st.rise_10_90 == doctest::Approx(0.1099).epsilon(0.0092));
  CHECK(st.settle_2pct == doctest::Approx(0.1956).epsilon(0.0103));
  CHECK(std::abs(freq_response(m, 0.0)(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(freq_response(m, 20.0)(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("second_order_ref matches the aggressive-model characteristics") {
  const ContinuousTf m = second_order_ref(25.0, 0.7);
  const StepStats st = step_stats(m, 1.0);
  CHECK(st.overshoot_pct == doctest::Approx(4.60).epsilon(0.012));
  CHECK(st.rise_10_90 == doctest::Approx(0.085).epsilon(0.024));
  CHECK(st.settle_2pct == doctest::Approx(0.239).epsilon(0.021));
  CHECK(std::abs(freq_response(m, 0.0)(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(freq_response(m, 25.0)(0, 0)) == doctest::Approx(1.0 / 1.4).epsilon(1e-9));

  const ContinuousTf hard = second_order_ref(10.0, 0.3);
  const StepStats h = step_stats(hard, 3.0);
  const double peak = 1.0 + std::exp(-0.3 * M_PI / std::sqrt(1.0 - 0.09));
  CHECK(h.peak == doctest::Approx(peak).epsilon(0.002));

  CHECK(std::abs(freq_response(second_order_ref(7.0, 1.3), 0.0)(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("zoh discretization of the lag places the pole at exp(-Ts/tau)") {
  const DiscreteSs d = discretize(first_order_ref(0.05), 0.005, Discretization::Zoh);
  REQUIRE(d.states() == 1);
  CHECK(d.a(0, 0) == doctest::Approx(std::exp(-0.1)).epsilon(1e-9));
}

TEST_CASE("zoh integrator accumulates a step exactly") {
  const ContinuousTf integ = ContinuousTf::siso({1.0}, {1.0, 0.0});
  const DiscreteSs d = discretize(integ, 0.01, Discretization::Zoh);
  REQUIRE(d.states() == 1);
  CHECK(d.a(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  const Signal u(0.01, Eigen::MatrixXd::Ones(100, 1));
  const Signal y = simulate_lti(d, u);
  CHECK(y.samples(99, 0) == doctest::Approx(0.99).epsilon(1e-9));  // integral of 1 over [0, 0.99)
}

TEST_CASE("tustin preserves DC gain exactly") {
  for (const auto& m : {first_order_ref(0.02), second_order_ref(12.0, 0.4),
                        ContinuousTf::siso({2.0, 3.0}, {0.1, 0.7, 3.0})}) {
    const DiscreteSs d = discretize(m, 0.004, Discretization::Tustin);
    const auto dc_d = freq_response(d, 0.0)(0, 0);
    const auto dc_c = freq_response(m, 0.0)(0, 0);
    CHECK(std::abs(dc_d - dc_c) < 1e-10);
  }
}

TEST_CASE("simulate_lti feedthrough, analytic lag step, zero response") {
  DiscreteSs ident;
  ident.a.resize(0, 0);
  ident.b.resize(0, 2);
  ident.c.resize(2, 0);
  ident.d = Eigen::MatrixXd::Identity(2, 2);
  ident.sample_period_s = 0.01;
  Eigen::MatrixXd u(5, 2);
  u << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  const Signal out = simulate_lti(ident, Signal(0.01, u));
  CHECK((out.samples - u).cwiseAbs().maxCoeff() == 0.0);

  const double ts = 0.002;
  const DiscreteSs lag = discretize(first_order_ref(0.05), ts, Discretization::Zoh);
  const Signal step(ts, Eigen::MatrixXd::Ones(500, 1));
  const Signal y = simulate_lti(lag, step);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < y.length(); ++k)
    worst = std::max(worst, std::abs(y.samples(k, 0) - (1.0 - std::exp(-y.time_at(k) / 0.05))));
  CHECK(worst < 1e-9);

  const Signal zero(ts, Eigen::MatrixXd::Zero(100, 1));
  CHECK(simulate_lti(lag, zero).samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("approximate_inverse properizes with fast poles and unit-DC composition") {
  const ContinuousTf m = first_order_ref(0.05);
  const ContinuousTf inv = approximate_inverse(m, 10.0);
  // (0.05 s + 1) / (0.005 s + 1)
  REQUIRE(inv.entry(0, 0).num.size() == 2);
  CHECK(inv.entry(0, 0).num[0] == doctest::Approx(0.05));
  CHECK(inv.entry(0, 0).num[1] == doctest::Approx(1.0));
  CHECK(inv.entry(0, 0).den[0] == doctest::Approx(0.005).epsilon(1e-9));
  CHECK(inv.entry(0, 0).den[1] == doctest::Approx(1.0));
  for (double w = 0.5; w <= 20.0; w *= 1.3) {
    const auto comp = freq_response(m, w)(0, 0) * freq_response(inv, w)(0, 0);
    CHECK(std::abs(comp) >= 0.995);
  }

  const ContinuousTf gain = ContinuousTf::siso({4.0}, {1.0});
  const ContinuousTf ginv = approximate_inverse(gain, 10.0);
  CHECK(std::abs(freq_response(ginv, 0.7)(0, 0) - 0.25) < 1e-12);

  const ContinuousTf m2 = second_order_ref(25.0, 0.7);
  const ContinuousTf inv2 = approximate_inverse(m2, 10.0);
  const auto roots = poly_roots(inv2.entry(0, 0).den);
  REQUIRE(roots.size() == 2);
  for (const auto& r : roots) CHECK(std::abs(r - std::complex<double>(-250.0, 0.0)) < 1e-6);
  CHECK(std::abs(freq_response(m2, 0.0)(0, 0) * freq_response(inv2, 0.0)(0, 0) - 1.0) < 1e-9);

  const ContinuousTf nmp = ContinuousTf::siso({1.0, -2.0}, {0.1, 1.0});  // zero at +2
  CHECK_THROWS_AS(approximate_inverse(nmp, 10.0), std::invalid_argument);
}

TEST_CASE("approximate_inverse composition gain stays within 5% below bandwidth") {
  for (double scale : {10.0, 20.0}) {
    const ContinuousTf m = second_order_ref(25.0, 0.7);
    const ContinuousTf inv = approximate_inverse(m, scale);
    for (double w = 0.1; w <= 25.0; w *= 1.25) {
      const auto comp = freq_response(m, w)(0, 0) * freq_response(inv, w)(0, 0);
      CHECK(std::abs(std::abs(comp) - 1.0) <= 0.05);
    }
  }
}

TEST_CASE("freq_response of discrete model matches DFT of a simulated tone") {
  const double ts = 0.002;
  const DiscreteSs d = discretize(second_order_ref(18.0, 0.5), ts, Discretization::Zoh);
  const double omega = 9.0;
  const double duration = 40.0 * 2.0 * M_PI / omega;
  const auto n = static_cast<Eigen::Index>(duration / ts);
  Eigen::MatrixXd u(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) u(k, 0) = std::sin(omega * static_cast<double>(k) * ts);
  const Signal us(ts, u);
  const Signal y = simulate_lti(d, us);
  DftOptions opts;
  opts.discard_fraction = 0.5;
  const BodePoint pt = dft_gain_phase(us, y, omega, opts);
  const auto g = freq_response(d, omega)(0, 0);
  CHECK(pt.gain == doctest::Approx(std::abs(g)).epsilon(1e-6));
  CHECK(pt.phase_rad == doctest::Approx(std::arg(g)).epsilon(1e-6));
}

TEST_CASE("zoh step response matches the continuous analytic one for test models") {
  const double ts = 1e-3;
  for (const auto& tau : {0.02, 0.08}) {
    const DiscreteSs d = discretize(first_order_ref(tau), ts, Discretization::Zoh);
    const Signal u(ts, Eigen::MatrixXd::Ones(400, 1));
    const Signal y = simulate_lti(d, u);
    for (Eigen::Index k = 0; k < y.length(); k += 37)
      CHECK(y.samples(k, 0) == doctest::Approx(1.0 - std::exp(-y.time_at(k) / tau)).epsilon(1e-8));
  }
  // Underdamped second order: y = 1 - e^{-z w t}(cos(wd t) + z w / wd sin(wd t)).
  const double wn = 12.0, z = 0.35;
  const DiscreteSs d = discretize(second_order_ref(wn, z), ts, Discretization::Zoh);
  const Signal u(ts, Eigen::MatrixXd::Ones(2000, 1));
  const Signal y = simulate_lti(d, u);
  const double wd = wn * std::sqrt(1.0 - z * z);
  for (Eigen::Index k = 0; k < y.length(); k += 131) {
    const double t = y.time_at(k);
    const double expect = 1.0 - std::exp(-z * wn * t) * (std::cos(wd * t) + z * wn / wd * std::sin(wd * t));
    CHECK(y.samples(k, 0) == doctest::Approx(expect).epsilon(1e-8));
  }
}

TEST_CASE("series and feedback composition agree with frequency algebra") {
  const double ts = 0.005;
  const DiscreteSs g1 = discretize(first_order_ref(0.05), ts, Discretization::Zoh);
  const DiscreteSs g2 = discretize(second_order_ref(20.0, 0.8), ts, Discretization::Zoh);
  const DiscreteSs ser = series_ss(g1, g2);
  const DiscreteSs fb = feedback_ss(ser);
  for (double w : {1.0, 5.0, 17.0}) {
    const auto a = freq_response(g1, w)(0, 0) * freq_response(g2, w)(0, 0);
    CHECK(std::abs(freq_response(ser, w)(0, 0) - a) < 1e-10);
    CHECK(std::abs(freq_response(fb, w)(0, 0) - a / (1.0 + a)) < 1e-10);
  }
}

TEST_CASE("ss_to_tf recovers the discrete rational form") {
  const double ts = 0.004;
  const DiscreteSs d = discretize(first_order_ref(0.05), ts, Discretization::Zoh);
  const RationalTf tf = ss_to_tf(d);
  for (double w : {0.0, 3.0, 40.0}) {
    const std::complex<double> zc = std::exp(std::complex<double>(0.0, w * ts));
    const auto direct = poly_eval(tf.num, zc) / poly_eval(tf.den, zc);
    CHECK(std::abs(direct - freq_response(d, w)(0, 0)) < 1e-10);
  }
}

TEST_CASE("model JSON round trips") {
  const ContinuousTf m = second_order_ref(25.0, 0.7);
  const ContinuousTf r = tf_from_json(tf_to_json(m));
  CHECK(r.rows == 1);
  CHECK(std::abs(freq_response(r, 11.0)(0, 0) - freq_response(m, 11.0)(0, 0)) < 1e-15);

  const DiscreteSs d = discretize(m, 0.005, Discretization::Tustin);
  const DiscreteSs rd = ss_from_json(ss_to_json(d));
  CHECK(std::abs(freq_response(rd, 11.0)(0, 0) - freq_response(d, 11.0)(0, 0)) < 1e-15);
}

TEST_CASE("improper models are rejected") {
  ContinuousTf bad;
  bad.rows = bad.cols = 1;
  bad.entries.push_back(RationalTf{{1.0, 0.0, 0.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
