#include <doctest.h>

#include <cmath>
#include <random>

#include "pivc/lti.hpp"
#include "pivc/vrft.hpp"

using namespace pivc;

namespace {

Signal random_signal(std::uint64_t seed, Eigen::Index n, Eigen::Index ch, double ts) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd data(n, ch);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < ch; ++j) data(i, j) = g(rng);
  return Signal(ts, data);
}

}  // namespace

TEST_CASE("virtual_error is zero for the unity reference model") {
  const ContinuousTf unity = ContinuousTf::siso({1.0}, {1.0});
  const Signal y = random_signal(1, 200, 1, 0.005);
  const Signal e = virtual_error(y, unity);
  CHECK(e.samples.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("virtual_error for a static half-gain reference equals y") {
  const ContinuousTf half = ContinuousTf::siso({0.5}, {1.0});
  const Signal y = random_signal(2, 150, 1, 0.005);
  const Signal e = virtual_error(y, half);
  CHECK((e.samples - y.samples).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("virtual_error approximates r - y when y came from the reference model") {
  const double ts = 0.005;
  const ContinuousTf m_r = first_order_ref(0.05);
  ProbeConfig pc;
  pc.duration_s = 30.0;
  pc.sample_period_s = ts;
  const Signal r = multisine(pc, 1);
  const Signal y = simulate_lti(discretize(m_r, ts, Discretization::Zoh), r);
  InverseConfig exact;
  exact.exact_discrete = true;  // the exact inverse regime
  const Signal e = virtual_error(y, m_r, exact);
  Signal truth = y;
  truth.samples = (r.samples - y.samples).topRows(e.length());
  truth.samples.conservativeResize(e.length(), 1);
  const Signal truth_trunc(ts, truth.samples.topRows(e.length()));
  CHECK(nrmse(e, truth_trunc) <= 0.02);
  // The causal fast-pole inverse keeps the intrinsic half-sample lag of
  // sampled data; its virtual error stays within a coarser band.
  const Signal e10 = virtual_error(y, m_r);
  Signal full_truth = y;
  full_truth.samples = r.samples - y.samples;
  CHECK(nrmse(e10, full_truth) <= 0.25);
}

TEST_CASE("virtual_error exact discrete inverse reproduces r - y to machine precision") {
  const double ts = 0.005;
  const ContinuousTf m_r = first_order_ref(0.05);
  const Signal r = random_signal(3, 400, 1, ts);
  const Signal y = simulate_lti(discretize(m_r, ts, Discretization::Zoh), r);
  InverseConfig cfg;
  cfg.exact_discrete = true;
  const Signal e = virtual_error(y, m_r, cfg);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < e.length(); ++k)
    worst = std::max(worst, std::abs(e.samples(k, 0) - (r.samples(k, 0) - y.samples(k, 0))));
  CHECK(worst < 1e-9);
}

TEST_CASE("build_regression layout and counting") {
  const Signal e = random_signal(4, 50, 1, 0.005);
  Signal u = e;
  RegressionOptions opts;
  opts.include_gamma = false;
  const RegressionData reg(e, u, 1, opts);
  CHECK(reg.cols() == 1);
  const Eigen::MatrixXd phi = reg.dense_phi();
  CHECK((phi.col(0) - e.samples.col(0)).cwiseAbs().maxCoeff() == 0.0);

  const Signal e3 = random_signal(5, 300, 3, 0.005);
  const RegressionData reg3(e3, e3, 200);
  CHECK(reg3.cols() == 200 * 9 + 6);
  CHECK(reg3.rows() == 300 * 3);
}

TEST_CASE("rank-1 least squares recovers u = 2e") {
  const Signal e = random_signal(6, 80, 1, 0.005);
  Signal u = e;
  u.samples = 2.0 * e.samples;
  RegressionOptions opts;
  opts.include_gamma = false;
  const RegressionData reg(e, u, 1, opts);
  const IfirParams p = fit_unconstrained(reg, 0.0);
  CHECK(p.taps[0](0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fit_unconstrained recovers a known MIMO iFIR from noiseless data") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  IfirParams truth;
  const int m = 4;
  for (int k = 0; k < m; ++k) {
    Eigen::MatrixXd h(2, 2);
    for (int i = 0; i < 4; ++i) h(i / 2, i % 2) = 0.5 * g(rng);
    truth.taps.push_back(h);
  }
  Eigen::MatrixXd gm(2, 2);
  gm << 1.2, 0.3, 0.3, 0.9;
  truth.gamma = gm;
  truth.sample_period_s = 0.005;

  const Signal e = random_signal(10, 500, 2, 0.005);
  const Signal u = eval_ifir(truth, e);
  const RegressionData reg(e, u, m);
  const IfirParams fit = fit_unconstrained(reg, 0.0);
  double worst = (fit.gamma - truth.gamma).cwiseAbs().maxCoeff();
  for (int k = 0; k < m; ++k)
    worst = std::max(worst, (fit.taps[static_cast<std::size_t>(k)] - truth.taps[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-6);
}

TEST_CASE("regression/evaluator consistency: Phi*x reproduces eval_ifir") {
  const Signal e = random_signal(12, 120, 2, 0.01);
  const Signal u = random_signal(13, 120, 2, 0.01);
  const RegressionData reg(e, u, 5);
  const IfirParams p = fit_unconstrained(reg);
  const Eigen::VectorXd x = reg.pack(p);
  const Eigen::MatrixXd phi = reg.dense_phi();
  const Eigen::VectorXd pred = phi * x;
  const Signal ueval = eval_ifir(p, e);
  double worst = 0.0;
  for (Eigen::Index t = 0; t < e.length(); ++t)
    for (Eigen::Index c = 0; c < 2; ++c)
      worst = std::max(worst, std::abs(pred(t * 2 + c) - ueval.samples(t, c)));
  CHECK(worst < 1e-10);
}

TEST_CASE("fitted parameters locally minimize the VRFT objective") {
  const Signal e = random_signal(14, 200, 1, 0.005);
  const Signal u = random_signal(15, 200, 1, 0.005);
  const RegressionData reg(e, u, 6);
  const double ridge = 1e-10;
  const IfirParams p = fit_unconstrained(reg, ridge);
  const Eigen::VectorXd x = reg.pack(p);
  const double j0 = reg.objective(x) + ridge * x.squaredNorm();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd dx(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) dx(i) = 0.01 * g(rng);
    const Eigen::VectorXd xp = x + dx;
    CHECK(reg.objective(xp) + ridge * xp.squaredNorm() >= j0 - 1e-12);
  }
}

TEST_CASE("zero target with ridge gives zero parameters") {
  const Signal e = random_signal(16, 100, 1, 0.005);
  const Signal u(0.005, Eigen::MatrixXd::Zero(100, 1));
  const RegressionData reg(e, u, 3);
  const IfirParams p = fit_unconstrained(reg, 1e-6);
  CHECK(reg.pack(p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rank deficiency with zero ridge throws") {
  // With the partial-history rows dropped, a constant error signal makes
  // every tap column identical.
  const Signal e(0.005, Eigen::MatrixXd::Ones(50, 1));
  const Signal u = random_signal(17, 50, 1, 0.005);
  RegressionOptions opts;
  opts.include_gamma = false;
  opts.drop_partial_history = true;
  const RegressionData reg(e, u, 3, opts);
  CHECK_THROWS_AS(fit_unconstrained(reg, 0.0), std::invalid_argument);
}

TEST_CASE("drop_partial_history removes zero-padded rows") {
  const Signal e = random_signal(18, 60, 1, 0.005);
  const Signal u = random_signal(19, 60, 1, 0.005);
  RegressionOptions opts;
  opts.drop_partial_history = true;
  const RegressionData reg(e, u, 4, opts);
  CHECK(reg.rows() == (60 - 3) * 1);
  const Eigen::MatrixXd phi = reg.dense_phi();
  // First kept row corresponds to t = 3 with full history.
  CHECK(phi(0, 0) == doctest::Approx(e.samples(3, 0)));
  CHECK(phi(0, 3) == doctest::Approx(e.samples(0, 0)));
}

TEST_CASE("fit_pid recovers pure proportional and PI laws") {
  const Signal e = random_signal(20, 400, 1, 0.001);
  Signal u = e;
  u.samples = 3.0 * e.samples;
  const PidParams p3 = fit_pid(e, u, false);
  CHECK(p3.kp(0, 0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::abs(p3.ki(0, 0)) < 1e-3);
  CHECK(std::abs(p3.kd(0, 0)) < 1e-3);

  Signal integral = e;
  for (Eigen::Index t = 0; t < e.length(); ++t) {
    integral.samples.row(t) = e.sample_period_s * e.samples.row(t);
    if (t > 0) integral.samples.row(t) += integral.samples.row(t - 1);
  }
  Signal u2 = e;
  u2.samples = 2.0 * e.samples + 0.5 * integral.samples;
  const PidParams p2 = fit_pid(e, u2, false);
  CHECK(p2.kp(0, 0) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(p2.ki(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(std::abs(p2.kd(0, 0)) < 1e-3);
}

TEST_CASE("passive PID projection never returns indefinite gains") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const Signal e = random_signal(100 + static_cast<std::uint64_t>(trial), 300, 2, 0.002);
    const Signal u = random_signal(200 + static_cast<std::uint64_t>(trial), 300, 2, 0.002);
    const PidParams p = fit_pid(e, u, true);
    for (const auto* k : {&p.kp, &p.ki, &p.kd}) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*k);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9);
      CHECK((*k - k->transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  (void)g;
}

TEST_CASE("pid_step matches eval_pid") {
  PidParams p;
  p.kp = Eigen::MatrixXd::Constant(1, 1, 2.0);
  p.ki = Eigen::MatrixXd::Constant(1, 1, 0.7);
  p.kd = Eigen::MatrixXd::Constant(1, 1, 0.05);
  p.tau_d = 0.004;
  p.sample_period_s = 0.002;
  const Signal e = random_signal(25, 200, 1, 0.002);
  const Signal batch = eval_pid(p, e);
  PidState st = PidState::initial(p);
  for (Eigen::Index t = 0; t < e.length(); ++t) {
    const Eigen::VectorXd u = pid_step(p, st, e.samples.row(t).transpose());
    CHECK(std::abs(u(0) - batch.samples(t, 0)) < 1e-12);
  }
}

TEST_CASE("pid JSON round trip") {
  PidParams p;
  p.kp = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  p.ki = Eigen::MatrixXd::Identity(3, 3) * 0.4;
  p.kd = Eigen::MatrixXd::Identity(3, 3) * 0.01;
  p.kp(0, 1) = 0.3;
  p.kp(1, 0) = 0.3;
  p.tau_d = 0.01;
  p.sample_period_s = 0.001;
  const PidParams r = pid_from_json(pid_to_json(p));
  CHECK((r.kp - p.kp).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(r.tau_d == doctest::Approx(0.01));
}
