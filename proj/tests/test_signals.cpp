#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pivc/lti.hpp"
#include "pivc/signal.hpp"

using namespace pivc;

TEST_CASE("multisine single tone matches sin(2t)") {
  ProbeConfig cfg;
  cfg.num_tones = 1;
  cfg.freq_low_rad_s = 2.0;
  cfg.freq_high_rad_s = 2.0;
  cfg.amplitudes = {1.0};
  cfg.phase_low_rad = 0.0;
  cfg.duration_s = M_PI;
  cfg.sample_period_s = 0.01;
  const Signal s = multisine(cfg);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < s.length(); ++k)
    worst = std::max(worst, std::abs(s.samples(k, 0) - std::sin(2.0 * s.time_at(k))));
  CHECK(worst < 1e-12);
}

TEST_CASE("multisine default band gives integer tones 1..10") {
  ProbeConfig cfg;
  cfg.duration_s = 10.0;
  const auto tones = multisine_tones(cfg);
  REQUIRE(tones.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(tones[static_cast<std::size_t>(i)] == doctest::Approx(i + 1.0).epsilon(1e-12));
}

TEST_CASE("multisine deterministic per seed and peak-bounded") {
  ProbeConfig cfg;
  cfg.duration_s = 10.0;
  cfg.seed = 42;
  cfg.randomize_amplitudes = true;
  const Signal a = multisine(cfg, 2);
  const Signal b = multisine(cfg, 2);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
  double amp_sum = 0.0;
  {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    for (int i = 0; i < cfg.num_tones; ++i) amp_sum += jitter(rng);
  }
  CHECK(a.samples.cwiseAbs().maxCoeff() <= amp_sum + 1e-12);
}

TEST_CASE("multisine rejects a record shorter than the slowest period") {
  ProbeConfig cfg;
  cfg.duration_s = 2.0;  // slowest tone 1 rad/s needs 2*pi seconds
  CHECK_THROWS_AS(multisine(cfg), std::invalid_argument);
}

TEST_CASE("multisine energy concentrates at the configured tones") {
  ProbeConfig cfg;
  cfg.num_tones = 5;
  cfg.freq_low_rad_s = 1.0;
  cfg.freq_high_rad_s = 5.0;
  cfg.duration_s = 4.0 * M_PI;  // integer periods of every integer tone
  cfg.sample_period_s = 0.005;
  const Signal s = multisine(cfg);
  const Eigen::Index n = s.length();
  double tone_energy = 0.0, total_energy = 0.0;
  for (Eigen::Index bin = 0; bin < n / 2; ++bin) {
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index k = 0; k < n; ++k)
      acc += s.samples(k, 0) * std::exp(std::complex<double>(0, -2.0 * M_PI * bin * k / static_cast<double>(n)));
    const double p = std::norm(acc);
    total_energy += p;
    const double omega = 2.0 * M_PI * static_cast<double>(bin) / (static_cast<double>(n) * s.sample_period_s);
    for (const double tone : multisine_tones(cfg))
      if (std::abs(omega - tone) < 0.5 * 2.0 * M_PI / (static_cast<double>(n) * s.sample_period_s)) tone_energy += p;
  }
  CHECK(tone_energy / total_energy > 0.999);
}

TEST_CASE("dft_gain_phase recovers an exact sinusoid ratio") {
  const double ts = 0.001;
  const double omega = 5.0;
  const auto n = static_cast<Eigen::Index>(std::llround(8.0 * 2.0 * M_PI / omega / ts));
  Eigen::MatrixXd in(n, 1), out(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * ts;
    in(k, 0) = std::sin(omega * t);
    out(k, 0) = 2.0 * std::sin(omega * t - 0.3);
  }
  const BodePoint pt = dft_gain_phase(Signal(ts, in), Signal(ts, out), omega);
  CHECK(pt.gain == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(pt.phase_rad == doctest::Approx(-0.3).epsilon(1e-6));
}

TEST_CASE("dft_gain_phase identity") {
  const double ts = 0.001;
  const auto n = static_cast<Eigen::Index>(4.0 * 2.0 * M_PI / 3.0 / ts);
  Eigen::MatrixXd in(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) in(k, 0) = std::sin(3.0 * static_cast<double>(k) * ts) + 0.2;
  const Signal s(ts, in);
  const BodePoint pt = dft_gain_phase(s, s, 3.0);
  CHECK(pt.gain == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pt.phase_rad == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dft_gain_phase matches the analytic response of the reference lag") {
  const double ts = 0.001;
  const double omega = 20.0;
  const double duration = 12.0 * 2.0 * M_PI / omega;
  const auto n = static_cast<Eigen::Index>(std::llround(duration / ts));
  Eigen::MatrixXd in(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) in(k, 0) = std::sin(omega * static_cast<double>(k) * ts);
  const Signal u(ts, in);
  const Signal y = simulate_lti(discretize(first_order_ref(0.05), ts, Discretization::Zoh), u);
  const BodePoint pt = dft_gain_phase(u, y, omega);
  const auto g = freq_response(first_order_ref(0.05), omega)(0, 0);
  CHECK(pt.gain == doctest::Approx(std::abs(g)).epsilon(0.01));
  CHECK(pt.phase_rad == doctest::Approx(std::arg(g)).epsilon(0.01));
}

TEST_CASE("dft_gain_phase rejects omega at or above Nyquist and empty input") {
  const double ts = 0.01;
  const Signal s(ts, Eigen::MatrixXd::Zero(1000, 1));
  Eigen::MatrixXd tone(1000, 1);
  for (Eigen::Index k = 0; k < 1000; ++k) tone(k, 0) = std::sin(5.0 * static_cast<double>(k) * ts);
  const Signal stone(ts, tone);
  CHECK_THROWS_AS(dft_gain_phase(stone, stone, M_PI / ts), std::invalid_argument);
  CHECK_THROWS_AS(dft_gain_phase(s, s, 5.0), std::invalid_argument);  // zero input energy
}

TEST_CASE("nrmse identities") {
  const Signal y_star(0.01, Eigen::MatrixXd::Ones(50, 2));
  CHECK(nrmse(y_star, y_star) == doctest::Approx(0.0));
  const Signal zero(0.01, Eigen::MatrixXd::Zero(50, 2));
  CHECK(nrmse(zero, y_star) == doctest::Approx(1.0));
  CHECK_THROWS_AS(nrmse(y_star, zero), std::invalid_argument);

  Eigen::MatrixXd ys(2, 1), y(2, 1);
  ys << 1.0, 1.0;
  y << 1.0, 0.0;
  CHECK(nrmse(Signal(0.01, y), Signal(0.01, ys)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("nrmse scale invariance property") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(40, 2), b(40, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i / 2, i % 2) = g(rng);
      b(i / 2, i % 2) = g(rng) + 0.1;
    }
    const double alpha = std::pow(10.0, g(rng));
    const double base = nrmse(Signal(0.01, a), Signal(0.01, b));
    const double scaled = nrmse(Signal(0.01, alpha * a), Signal(0.01, alpha * b));
    CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
    CHECK(base >= 0.0);
  }
}

TEST_CASE("improvement arithmetic from the reported step-response table") {
  CHECK(improvement(0.156, 0.092) == doctest::Approx(41.0).epsilon(0.001));
  CHECK(improvement(0.5, 0.5) == doctest::Approx(0.0));
  CHECK(improvement(0.660, 0.169) == doctest::Approx(74.4).epsilon(0.002));
  CHECK_THROWS_AS(improvement(0.0, 0.1), std::invalid_argument);
}

TEST_CASE("csv round trip preserves samples and rejects malformed files") {
  const auto dir = std::filesystem::temp_directory_path() / "pivc_sig_test";
  std::filesystem::create_directories(dir);
  Eigen::MatrixXd data(37, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) data(i, j) = g(rng);
  const Signal s(0.005, data, 1.25);
  const std::string path = (dir / "sig.csv").string();
  write_signal_csv(s, path, {"a", "b", "c"});
  std::vector<std::string> names;
  const Signal r = read_signal_csv(path, &names);
  CHECK(names == std::vector<std::string>{"a", "b", "c"});
  CHECK(r.sample_period_s == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(r.start_time_s == doctest::Approx(1.25));
  CHECK((r.samples - s.samples).cwiseAbs().maxCoeff() < 1e-15);

  const std::string bad = (dir / "bad.csv").string();
  {
    std::ofstream out(bad);
    out << "t,x\n0,1\n0.005,2\n0.011,3\n";  // non-constant step
  }
  CHECK_THROWS(read_signal_csv(bad));
}

TEST_CASE("decimate keeps every factor-th sample") {
  Eigen::MatrixXd data(10, 1);
  for (Eigen::Index i = 0; i < 10; ++i) data(i, 0) = static_cast<double>(i);
  const Signal s(0.001, data);
  const Signal d = decimate(s, 5);
  REQUIRE(d.length() == 2);
  CHECK(d.samples(0, 0) == 0.0);
  CHECK(d.samples(1, 0) == 5.0);
  CHECK(d.sample_period_s == doctest::Approx(0.005));
}
