#include "pivc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pivc {

Signal::Signal(double ts, Eigen::MatrixXd data, double start)
    : sample_period_s(ts), start_time_s(start), samples(std::move(data)) {
  validate();
}

Signal Signal::zeros(double ts, Eigen::Index n, Eigen::Index channels, double start) {
  return Signal(ts, Eigen::MatrixXd::Zero(n, channels), start);
}

void Signal::validate() const {
  if (!(sample_period_s > 0.0)) throw std::invalid_argument("Signal: sample_period_s must be > 0");
  if (samples.rows() < 1 || samples.cols() < 1)
    throw std::invalid_argument("Signal: need at least one sample and one channel");
  if (!samples.allFinite()) throw std::invalid_argument("Signal: non-finite sample");
}

std::vector<double> multisine_tones(const ProbeConfig& cfg) {
  if (cfg.num_tones < 1) throw std::invalid_argument("multisine: num_tones must be >= 1");
  if (!(cfg.freq_low_rad_s > 0.0)) throw std::invalid_argument("multisine: freq_low must be > 0");
  if (cfg.num_tones > 1 && !(cfg.freq_high_rad_s > cfg.freq_low_rad_s))
    throw std::invalid_argument("multisine: freq_high must exceed freq_low");
  std::vector<double> tones(static_cast<std::size_t>(cfg.num_tones));
  if (cfg.num_tones == 1) {
    tones[0] = cfg.freq_low_rad_s;
  } else {
    const double step = (cfg.freq_high_rad_s - cfg.freq_low_rad_s) / (cfg.num_tones - 1);
    for (int i = 0; i < cfg.num_tones; ++i) tones[static_cast<std::size_t>(i)] = cfg.freq_low_rad_s + step * i;
  }
  return tones;
}

Signal multisine(const ProbeConfig& cfg, int channels) {
  const auto tones = multisine_tones(cfg);
  if (channels < 1) throw std::invalid_argument("multisine: channels must be >= 1");
  if (!(cfg.sample_period_s > 0.0)) throw std::invalid_argument("multisine: sample_period_s must be > 0");
  const double slowest_period = 2.0 * M_PI / cfg.freq_low_rad_s;
  if (cfg.duration_s < slowest_period - 1e-12)
    throw std::invalid_argument("multisine: duration shorter than one period of the slowest tone");

  std::vector<double> amps = cfg.amplitudes;
  if (amps.empty()) amps.assign(tones.size(), 1.0);
  if (amps.size() != tones.size())
    throw std::invalid_argument("multisine: amplitudes size must match num_tones");
  for (double a : amps)
    if (!(a > 0.0)) throw std::invalid_argument("multisine: amplitudes must be positive");
  if (cfg.randomize_amplitudes) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    for (double& a : amps) a *= jitter(rng);
  }

  std::vector<double> phases(tones.size());
  if (tones.size() == 1) {
    phases[0] = cfg.phase_low_rad;
  } else {
    const double step = (cfg.phase_high_rad - cfg.phase_low_rad) / (static_cast<double>(tones.size()) - 1.0);
    for (std::size_t i = 0; i < tones.size(); ++i) phases[i] = cfg.phase_low_rad + step * static_cast<double>(i);
  }

  const auto n = static_cast<Eigen::Index>(std::llround(cfg.duration_s / cfg.sample_period_s));
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(n, 1), channels);
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    const double t = static_cast<double>(k) * cfg.sample_period_s;
    double v = 0.0;
    for (std::size_t i = 0; i < tones.size(); ++i) v += amps[i] * std::sin(tones[i] * t + phases[i]);
    data.row(k).setConstant(v);
  }
  return Signal(cfg.sample_period_s, std::move(data));
}

BodePoint dft_gain_phase(const Signal& input, const Signal& output, double omega_rad_s,
                         const DftOptions& opts) {
  input.validate();
  output.validate();
  if (input.length() != output.length() || input.channels() != output.channels())
    throw std::invalid_argument("dft_gain_phase: input/output shape mismatch");
  if (std::abs(input.sample_period_s - output.sample_period_s) > 1e-12)
    throw std::invalid_argument("dft_gain_phase: sample rate mismatch");
  const double ts = input.sample_period_s;
  if (!(omega_rad_s > 0.0)) throw std::invalid_argument("dft_gain_phase: omega must be > 0");
  if (omega_rad_s >= M_PI / ts) throw std::invalid_argument("dft_gain_phase: omega at or above Nyquist");
  const double period_samples = 2.0 * M_PI / (omega_rad_s * ts);
  if (static_cast<double>(input.length()) < 2.0 * period_samples)
    throw std::invalid_argument("dft_gain_phase: record shorter than two periods of omega");

  auto start = static_cast<Eigen::Index>(std::floor(opts.discard_fraction * static_cast<double>(input.length())));
  start = std::clamp<Eigen::Index>(start, 0, input.length() - 1);
  const auto win = input.length() - start;
  if (static_cast<double>(win) < period_samples)
    throw std::invalid_argument("dft_gain_phase: not enough post-transient samples for one period");

  // Exact-frequency Fourier coefficient: least-squares projection onto
  // {1, cos(wt), sin(wt)} over the window. Coincides with the DFT bins at
  // {0, w} when omega is resolvable and stays exact for off-grid tones;
  // the constant column absorbs integral-action offsets.
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Eigen::MatrixXd rhs_u = Eigen::MatrixXd::Zero(3, input.channels());
  Eigen::MatrixXd rhs_y = Eigen::MatrixXd::Zero(3, input.channels());
  for (Eigen::Index k = 0; k < win; ++k) {
    const double t = static_cast<double>(k) * ts;
    Eigen::Vector3d basis(1.0, std::cos(omega_rad_s * t), std::sin(omega_rad_s * t));
    gram += basis * basis.transpose();
    rhs_u += basis * input.samples.row(start + k);
    rhs_y += basis * output.samples.row(start + k);
  }
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(gram);
  if (!lu.isInvertible()) throw std::invalid_argument("dft_gain_phase: omega unresolvable on this window");
  const Eigen::MatrixXd coef_u = lu.solve(rhs_u);
  const Eigen::MatrixXd coef_y = lu.solve(rhs_y);

  const double in_scale = input.samples.cwiseAbs().maxCoeff();
  BodePoint pt;
  pt.omega_rad_s = omega_rad_s;
  pt.channel_response.resize(input.channels());
  for (Eigen::Index c = 0; c < input.channels(); ++c) {
    // x(t) ~ a cos + b sin = Re[(a - jb) e^{jwt}].
    const std::complex<double> xu(coef_u(1, c), -coef_u(2, c));
    const std::complex<double> xy(coef_y(1, c), -coef_y(2, c));
    if (std::abs(xu) <= 1e-9 * std::max(in_scale, 1e-300))
      throw std::invalid_argument("dft_gain_phase: input has no energy at omega");
    pt.channel_response(c) = xy / xu;
  }
  pt.gain = std::abs(pt.channel_response(0));
  pt.phase_rad = std::arg(pt.channel_response(0));
  return pt;
}

double nrmse(const Signal& y, const Signal& y_star) {
  if (y.length() != y_star.length() || y.channels() != y_star.channels())
    throw std::invalid_argument("nrmse: shape mismatch");
  const double ref = y_star.samples.squaredNorm();
  if (ref <= 0.0) throw std::invalid_argument("nrmse: reference has zero energy");
  return std::sqrt((y.samples - y_star.samples).squaredNorm() / ref);
}

double improvement(double nrmse_baseline, double nrmse_candidate) {
  if (!(nrmse_baseline > 0.0)) throw std::invalid_argument("improvement: baseline NRMSE must be > 0");
  return 100.0 * (nrmse_baseline - nrmse_candidate) / nrmse_baseline;
}

double min_prefix_supply(const Signal& u, const Signal& y) {
  if (u.length() != y.length() || u.channels() != y.channels())
    throw std::invalid_argument("min_prefix_supply: shape mismatch");
  double acc = 0.0;
  double lo = 0.0;
  for (Eigen::Index k = 0; k < u.length(); ++k) {
    acc += u.samples.row(k).dot(y.samples.row(k)) * u.sample_period_s;
    lo = std::min(lo, acc);
  }
  return lo;
}

Signal decimate(const Signal& sig, int factor) {
  sig.validate();
  if (factor < 1) throw std::invalid_argument("decimate: factor must be >= 1");
  const Eigen::Index n = (sig.length() + factor - 1) / factor;
  Eigen::MatrixXd data(n, sig.channels());
  for (Eigen::Index k = 0; k < n; ++k) data.row(k) = sig.samples.row(k * factor);
  return Signal(sig.sample_period_s * factor, std::move(data), sig.start_time_s);
}

void write_signal_csv(const Signal& sig, const std::string& path, const std::vector<std::string>& names) {
  sig.validate();
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != sig.channels())
    throw std::invalid_argument("write_signal_csv: names size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_signal_csv: cannot open " + path);
  out << "t";
  for (Eigen::Index c = 0; c < sig.channels(); ++c) {
    out << ',' << (names.empty() ? ("ch" + std::to_string(c)) : names[static_cast<std::size_t>(c)]);
  }
  out << '\n';
  char buf[32];
  for (Eigen::Index k = 0; k < sig.length(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", sig.time_at(k));
    out << buf;
    for (Eigen::Index c = 0; c < sig.channels(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", sig.samples(k, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_signal_csv: write failed for " + path);
}

Signal read_signal_csv(const std::string& path, std::vector<std::string>* names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_signal_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_signal_csv: empty file " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < 2 || header[0] != "t")
    throw std::runtime_error("read_signal_csv: header must be t,<name_0>,...");
  const std::size_t ch = header.size() - 1;

  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::size_t col = 0;
    while (std::getline(ss, tok, ',')) {
      double v = 0.0;
      try {
        v = std::stod(tok);
      } catch (const std::exception&) {
        throw std::runtime_error("read_signal_csv: bad number '" + tok + "' in " + path);
      }
      if (col == 0)
        times.push_back(v);
      else
        values.push_back(v);
      ++col;
    }
    if (col != ch + 1) throw std::runtime_error("read_signal_csv: ragged row in " + path);
  }
  if (times.size() < 1) throw std::runtime_error("read_signal_csv: no data rows in " + path);

  double ts = times.size() > 1 ? times[1] - times[0] : 1.0;
  if (!(ts > 0.0)) throw std::runtime_error("read_signal_csv: time column not increasing");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs(times[k] - times[k - 1] - ts) > 1e-9)
      throw std::runtime_error("read_signal_csv: non-constant time step");
  }

  Eigen::MatrixXd data(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(ch));
  for (std::size_t k = 0; k < times.size(); ++k)
    for (std::size_t c = 0; c < ch; ++c)
      data(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = values[k * ch + c];
  if (names) names->assign(header.begin() + 1, header.end());
  return Signal(ts, std::move(data), times[0]);
}

}  // namespace pivc
