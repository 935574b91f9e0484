#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pivc/ifir.hpp"
#include "pivc/lti.hpp"
#include "pivc/signal.hpp"
#include "pivc/vrft.hpp"

namespace pivc {

/// Multi-rate loop settings. The hold factor comes from the controller's
/// own sample period: plant_rate_hz * controller_ts must be an integer.
struct LoopConfig {
  double plant_rate_hz = 1000.0;
  double controller_rate_hz = 200.0;  // informational default; controllers carry their own Ts
  double measurement_noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  double divergence_factor = 10.0;  // bound = factor * max |y*|
  int divergence_grace = 50;        // fast samples before the guard arms
};

using Controller = std::variant<IfirParams, PidParams>;

struct TrackingResult {
  Signal reference;  // r at plant rate
  Signal desired;    // y* = M_r(r)
  Signal measured;   // plant output y
  Signal control;    // held control input u
  double nrmse = 0.0;
  bool diverged = false;
  Eigen::Index diverged_at = -1;
  double controller_supply_total = 0.0;  // sum e'u * Ts at controller ticks
  double controller_supply_min = 0.0;    // min over prefixes
  std::vector<BodePoint> bode_points;
};

/// Fast-rate plant driven by a zero-order-held slow controller with a
/// one-step computation delay. The reference model runs in parallel on r.
TrackingResult simulate_loop(const DiscreteSs& plant, const Controller& controller,
                             const ContinuousTf& m_r, const Signal& r, const LoopConfig& cfg);

Signal step_profile(double amplitude, double duration_s, double ts, int channels = 1);
Signal trapezoid_profile(double peak, double ramp_s, double dwell_s, double tail_s, double ts,
                         int channels = 1);
Signal random_cosine_profile(std::uint64_t seed, int tones, double band_lo_rad_s, double band_hi_rad_s,
                             double amplitude, double duration_s, double ts, int channels = 1);

struct BodeSweepOptions {
  double amplitude = 1.0;
  double min_periods = 25.0;
  double min_duration_s = 4.0;
  double discard_fraction = 0.25;
};

/// Closed-loop frequency response: one tone per point, DFT estimate after
/// the transient discard. Diverged tones are flagged and skipped.
std::vector<BodePoint> bode_sweep(const DiscreteSs& plant, const Controller& controller,
                                  const ContinuousTf& m_r, const std::vector<double>& omegas,
                                  const LoopConfig& cfg, const BodeSweepOptions& opts = {});

struct Evaluation {
  double nrmse = 0.0;
  bool diverged = false;
  std::optional<double> improvement_pct;  // absent when either run diverged
  bool baseline_diverged = false;
};

/// Metrics over a time window [t0_s, t1_s); negative t1 means full record.
Evaluation evaluate(const TrackingResult& result, const TrackingResult* baseline = nullptr,
                    double window_t0_s = 0.0, double window_t1_s = -1.0);

/// Persists signals.csv, metrics.json and (when present) bode.csv.
void write_tracking_result(const std::string& dir, const TrackingResult& result);

}  // namespace pivc
