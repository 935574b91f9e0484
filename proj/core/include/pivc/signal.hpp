#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace pivc {

/// Uniformly sampled multichannel time series. Samples are stored dense,
/// one column per channel; values are immutable after construction by
/// convention (all operations return new signals).
struct Signal {
  double sample_period_s = 0.0;
  double start_time_s = 0.0;
  Eigen::MatrixXd samples;  // N x channels

  Signal() = default;
  Signal(double ts, Eigen::MatrixXd data, double start = 0.0);

  Eigen::Index length() const { return samples.rows(); }
  Eigen::Index channels() const { return samples.cols(); }
  double rate_hz() const { return 1.0 / sample_period_s; }
  double time_at(Eigen::Index k) const { return start_time_s + static_cast<double>(k) * sample_period_s; }
  double duration_s() const { return static_cast<double>(length()) * sample_period_s; }

  static Signal zeros(double ts, Eigen::Index n, Eigen::Index channels, double start = 0.0);

  /// Throws std::invalid_argument if the invariants do not hold
  /// (N >= 1, finite entries, positive sample period).
  void validate() const;
};

/// Multisine probing configuration. Tone frequencies and phases are
/// uniformly spaced over their ranges; the seed only perturbs amplitudes
/// when randomize_amplitudes is set.
struct ProbeConfig {
  int num_tones = 10;
  double freq_low_rad_s = 1.0;
  double freq_high_rad_s = 10.0;
  double phase_low_rad = 0.0;
  double phase_high_rad = 3.14159265358979323846;
  std::vector<double> amplitudes;  // empty -> all tones at 1.0
  double duration_s = 0.0;
  double sample_period_s = 0.005;
  std::uint64_t seed = 0;
  bool randomize_amplitudes = false;
};

/// One frequency-response sample. For multichannel records,
/// channel_response holds the complex output/input ratio per channel and
/// gain/phase mirror channel 0.
struct BodePoint {
  double omega_rad_s = 0.0;
  double gain = 0.0;
  double phase_rad = 0.0;
  Eigen::VectorXcd channel_response;
  bool diverged = false;
};

struct DftOptions {
  double discard_fraction = 0.25;  // transient prefix dropped before analysis
};

/// Sum-of-sines probe, identical waveform on every channel.
Signal multisine(const ProbeConfig& cfg, int channels = 1);

/// Tone frequencies used by multisine for this configuration.
std::vector<double> multisine_tones(const ProbeConfig& cfg);

/// Single-bin DFT ratio output/input at omega, computed over the
/// post-transient window truncated to an integer number of periods.
BodePoint dft_gain_phase(const Signal& input, const Signal& output, double omega_rad_s,
                         const DftOptions& opts = {});

/// Normalized RMS tracking error over all samples and channels.
double nrmse(const Signal& y, const Signal& y_star);

/// Relative NRMSE improvement of the candidate over a baseline, in percent.
double improvement(double nrmse_baseline, double nrmse_candidate);

/// Minimum over record prefixes of sum_t u(t)'y(t)*Ts. Nonnegative for a
/// passive map driven from rest.
double min_prefix_supply(const Signal& u, const Signal& y);

/// Every factor-th sample; an explicit rate change, never applied silently.
Signal decimate(const Signal& sig, int factor);

/// CSV persistence: header `t,<name_0>,...`; time column with constant step.
void write_signal_csv(const Signal& sig, const std::string& path,
                      const std::vector<std::string>& names = {});
Signal read_signal_csv(const std::string& path, std::vector<std::string>* names = nullptr);

}  // namespace pivc
