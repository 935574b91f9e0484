#include "pivc/loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pivc {

using json = nlohmann::json;

namespace {

struct ControllerRunner {
  const Controller* ctrl;
  IfirState ifir_state;
  PidState pid_state;

  explicit ControllerRunner(const Controller& c) : ctrl(&c) {
    if (std::holds_alternative<IfirParams>(c)) {
      ifir_state = IfirState::initial(std::get<IfirParams>(c));
    } else {
      pid_state = PidState::initial(std::get<PidParams>(c));
    }
  }
  double sample_period() const {
    return std::holds_alternative<IfirParams>(*ctrl) ? std::get<IfirParams>(*ctrl).sample_period_s
                                                     : std::get<PidParams>(*ctrl).sample_period_s;
  }
  int channels() const {
    return std::holds_alternative<IfirParams>(*ctrl) ? std::get<IfirParams>(*ctrl).channels()
                                                     : std::get<PidParams>(*ctrl).channels();
  }
  Eigen::VectorXd step(const Eigen::VectorXd& e) {
    if (std::holds_alternative<IfirParams>(*ctrl)) return ifir_step(std::get<IfirParams>(*ctrl), ifir_state, e);
    return pid_step(std::get<PidParams>(*ctrl), pid_state, e);
  }
};

}  // namespace

TrackingResult simulate_loop(const DiscreteSs& plant, const Controller& controller,
                             const ContinuousTf& m_r, const Signal& r, const LoopConfig& cfg) {
  plant.validate();
  r.validate();
  const double ts_fast = 1.0 / cfg.plant_rate_hz;
  if (std::abs(plant.sample_period_s - ts_fast) > 1e-12)
    throw std::invalid_argument("simulate_loop: plant must be discretized at plant_rate_hz");
  if (std::abs(r.sample_period_s - ts_fast) > 1e-12)
    throw std::invalid_argument("simulate_loop: reference must be sampled at plant_rate_hz");

  ControllerRunner runner(controller);
  const double ts_slow = runner.sample_period();
  const double hold_real = ts_slow * cfg.plant_rate_hz;
  const int hold = static_cast<int>(std::llround(hold_real));
  if (hold < 1 || std::abs(hold_real - hold) > 1e-9)
    throw std::invalid_argument("simulate_loop: plant rate must be an integer multiple of the controller rate");
  if (runner.channels() != plant.outputs() || plant.inputs() != plant.outputs() ||
      r.channels() != plant.outputs())
    throw std::invalid_argument("simulate_loop: channel mismatch");

  const Signal desired = simulate_lti(discretize(m_r, ts_fast, Discretization::Zoh), r);
  const double ystar_peak = desired.samples.cwiseAbs().maxCoeff();
  const double bound = cfg.divergence_factor * std::max(ystar_peak, 1e-9);

  std::mt19937_64 noise_rng(cfg.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Eigen::Index n = r.length();
  const Eigen::Index ch = r.channels();
  Eigen::MatrixXd y_rec(n, ch), u_rec(n, ch);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.states());
  Eigen::VectorXd u_applied = Eigen::VectorXd::Zero(ch);
  Eigen::VectorXd u_pending;
  bool has_pending = false;

  TrackingResult res;
  res.controller_supply_min = 0.0;
  res.controller_supply_total = 0.0;
  Eigen::Index t_end = n;

  for (Eigen::Index t = 0; t < n; ++t) {
    if (has_pending) {
      u_applied = u_pending;
      has_pending = false;
    }
    const Eigen::VectorXd y = plant.c * x + plant.d * u_applied;
    y_rec.row(t) = y.transpose();
    u_rec.row(t) = u_applied.transpose();

    if (t >= cfg.divergence_grace && y.cwiseAbs().maxCoeff() > bound) {
      res.diverged = true;
      res.diverged_at = t;
      t_end = t + 1;
      break;
    }

    if (t % hold == 0) {
      Eigen::VectorXd y_meas = y;
      if (cfg.measurement_noise_sigma > 0.0)
        for (Eigen::Index c = 0; c < ch; ++c) y_meas(c) += cfg.measurement_noise_sigma * gauss(noise_rng);
      const Eigen::VectorXd e = r.samples.row(t).transpose() - y_meas;
      const Eigen::VectorXd u_next = runner.step(e);
      res.controller_supply_total += e.dot(u_next) * ts_slow;
      res.controller_supply_min = std::min(res.controller_supply_min, res.controller_supply_total);
      u_pending = u_next;
      has_pending = true;
    }
    x = plant.a * x + plant.b * u_applied;
    if (!x.allFinite()) {
      res.diverged = true;
      res.diverged_at = t;
      t_end = t + 1;
      break;
    }
  }

  res.reference = Signal(ts_fast, r.samples.topRows(t_end), r.start_time_s);
  res.desired = Signal(ts_fast, desired.samples.topRows(t_end), r.start_time_s);
  res.measured = Signal(ts_fast, y_rec.topRows(t_end), r.start_time_s);
  res.control = Signal(ts_fast, u_rec.topRows(t_end), r.start_time_s);
  const double ref_energy = res.desired.samples.squaredNorm();
  res.nrmse = ref_energy > 0.0 ? nrmse(res.measured, res.desired) : std::numeric_limits<double>::quiet_NaN();
  return res;
}

Signal step_profile(double amplitude, double duration_s, double ts, int channels) {
  if (!(duration_s > 0.0) || !(ts > 0.0)) throw std::invalid_argument("step_profile: durations must be > 0");
  const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(duration_s / ts)));
  return Signal(ts, Eigen::MatrixXd::Constant(n, channels, amplitude));
}

Signal trapezoid_profile(double peak, double ramp_s, double dwell_s, double tail_s, double ts, int channels) {
  if (!(ramp_s > 0.0) || dwell_s < 0.0 || tail_s < 0.0 || !(ts > 0.0))
    throw std::invalid_argument("trapezoid_profile: bad durations");
  const double total = 2.0 * ramp_s + dwell_s + tail_s;
  const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(total / ts)));
  Eigen::MatrixXd data(n, channels);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * ts;
    double v = 0.0;
    if (t < ramp_s)
      v = peak * t / ramp_s;
    else if (t < ramp_s + dwell_s)
      v = peak;
    else if (t < 2.0 * ramp_s + dwell_s)
      v = peak * (1.0 - (t - ramp_s - dwell_s) / ramp_s);
    data.row(k).setConstant(v);
  }
  return Signal(ts, std::move(data));
}

Signal random_cosine_profile(std::uint64_t seed, int tones, double band_lo_rad_s, double band_hi_rad_s,
                             double amplitude, double duration_s, double ts, int channels) {
  if (tones < 1 || !(band_lo_rad_s > 0.0) || !(band_hi_rad_s >= band_lo_rad_s))
    throw std::invalid_argument("random_cosine_profile: bad band");
  if (!(duration_s > 0.0) || !(ts > 0.0)) throw std::invalid_argument("random_cosine_profile: bad durations");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(duration_s / ts)));
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(n, channels);
  for (int c = 0; c < channels; ++c) {
    std::vector<double> ph(static_cast<std::size_t>(tones));
    for (auto& p : ph) p = phase(rng);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * ts;
      double v = 0.0;
      for (int i = 0; i < tones; ++i) {
        const double w = tones == 1 ? band_lo_rad_s
                                    : band_lo_rad_s + (band_hi_rad_s - band_lo_rad_s) * i / (tones - 1);
        v += std::cos(w * t + ph[static_cast<std::size_t>(i)]);
      }
      data(k, c) = v;
    }
    const double peak = data.col(c).cwiseAbs().maxCoeff();
    if (peak > 0.0) data.col(c) *= amplitude / peak;
  }
  return Signal(ts, std::move(data));
}

std::vector<BodePoint> bode_sweep(const DiscreteSs& plant, const Controller& controller,
                                  const ContinuousTf& m_r, const std::vector<double>& omegas,
                                  const LoopConfig& cfg, const BodeSweepOptions& opts) {
  std::vector<BodePoint> points;
  const double ts = 1.0 / cfg.plant_rate_hz;
  for (double w : omegas) {
    const double period = 2.0 * M_PI / w;
    const double duration = std::max(opts.min_duration_s, opts.min_periods * period / (1.0 - opts.discard_fraction));
    const auto n = static_cast<Eigen::Index>(std::llround(duration / ts));
    Eigen::MatrixXd data(n, plant.outputs());
    for (Eigen::Index k = 0; k < n; ++k)
      data.row(k).setConstant(opts.amplitude * std::sin(w * static_cast<double>(k) * ts));
    const Signal r(ts, std::move(data));
    const TrackingResult run = simulate_loop(plant, controller, m_r, r, cfg);
    if (run.diverged) {
      BodePoint pt;
      pt.omega_rad_s = w;
      pt.diverged = true;
      points.push_back(pt);
      continue;
    }
    DftOptions dft;
    dft.discard_fraction = opts.discard_fraction;
    points.push_back(dft_gain_phase(run.reference, run.measured, w, dft));
  }
  return points;
}

Evaluation evaluate(const TrackingResult& result, const TrackingResult* baseline, double window_t0_s,
                    double window_t1_s) {
  const auto slice = [&](const TrackingResult& r) {
    const double ts = r.measured.sample_period_s;
    auto k0 = static_cast<Eigen::Index>(std::llround((window_t0_s - r.measured.start_time_s) / ts));
    k0 = std::clamp<Eigen::Index>(k0, 0, r.measured.length());
    Eigen::Index k1 = window_t1_s < 0.0
                          ? r.measured.length()
                          : std::clamp<Eigen::Index>(
                                static_cast<Eigen::Index>(std::llround((window_t1_s - r.measured.start_time_s) / ts)),
                                k0, r.measured.length());
    if (k1 <= k0) throw std::invalid_argument("evaluate: empty window");
    const Signal y(ts, r.measured.samples.middleRows(k0, k1 - k0));
    const Signal ys(ts, r.desired.samples.middleRows(k0, k1 - k0));
    return std::pair<Signal, Signal>(y, ys);
  };

  Evaluation ev;
  ev.diverged = result.diverged;
  auto [y, ys] = slice(result);
  ev.nrmse = ys.samples.squaredNorm() > 0.0 ? nrmse(y, ys) : std::numeric_limits<double>::quiet_NaN();
  if (baseline) {
    ev.baseline_diverged = baseline->diverged;
    auto [by, bys] = slice(*baseline);
    const double base = bys.samples.squaredNorm() > 0.0 ? nrmse(by, bys) : std::numeric_limits<double>::quiet_NaN();
    if (!result.diverged && !baseline->diverged && std::isfinite(base) && base > 0.0 && std::isfinite(ev.nrmse))
      ev.improvement_pct = improvement(base, ev.nrmse);
  }
  return ev;
}

void write_tracking_result(const std::string& dir, const TrackingResult& result) {
  std::filesystem::create_directories(dir);
  const Eigen::Index ch = result.measured.channels();
  Eigen::MatrixXd all(result.measured.length(), 4 * ch);
  all << result.reference.samples, result.desired.samples, result.measured.samples, result.control.samples;
  std::vector<std::string> names;
  const char* prefixes[4] = {"r", "ystar", "y", "u"};
  for (const char* p : prefixes)
    for (Eigen::Index c = 0; c < ch; ++c) names.push_back(std::string(p) + "_" + std::to_string(c));
  write_signal_csv(Signal(result.measured.sample_period_s, all, result.measured.start_time_s),
                   dir + "/signals.csv", names);

  json m;
  m["nrmse"] = std::isfinite(result.nrmse) ? json(result.nrmse) : json(nullptr);
  m["diverged"] = result.diverged;
  m["diverged_at"] = result.diverged_at;
  m["controller_supply_total"] = result.controller_supply_total;
  m["controller_supply_min"] = result.controller_supply_min;
  m["samples"] = result.measured.length();
  m["sample_period_s"] = result.measured.sample_period_s;
  std::ofstream(dir + "/metrics.json") << m.dump(2) << '\n';

  if (!result.bode_points.empty()) {
    std::ofstream out(dir + "/bode.csv");
    out << "omega_rad_s,gain,phase_rad,diverged\n";
    char buf[96];
    for (const auto& pt : result.bode_points) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%d\n", pt.omega_rad_s, pt.gain, pt.phase_rad,
                    pt.diverged ? 1 : 0);
      out << buf;
    }
  }
}

}  // namespace pivc
