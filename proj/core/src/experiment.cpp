#include "pivc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pivc/report.hpp"

namespace pivc {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: expected object at " + where);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + item.key() + "' at " + where);
  }
}

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config: ") + key + " must be a number");
  return j.at(key).get<double>();
}

// epsilon/ridge/tau_d accept "auto" sentinels.
double number_or_auto(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_string()) {
    if (j.at(key).get<std::string>() == "auto") return -1.0;
    throw ConfigError(std::string("config: ") + key + " must be a number or \"auto\"");
  }
  return j.at(key).get<double>();
}

Eigen::Matrix3d matrix3_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("config: " + where + " must be a 3x3 array");
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || row.size() != 3) throw ConfigError("config: " + where + " must be a 3x3 array");
    for (int c = 0; c < 3; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

PlantSpec plant_from_json(const json& j, const std::string& where) {
  PlantSpec spec;
  if (j.is_string()) {
    spec.preset = j.get<std::string>();
    if (spec.preset != "long_plate" && spec.preset != "short_plate" && spec.preset != "cartesian3")
      throw ConfigError("config: unknown plant preset '" + spec.preset + "'");
    return spec;
  }
  if (!j.is_object()) throw ConfigError("config: plant must be a preset name or an object at " + where);
  const std::string type = j.value("type", "");
  if (type == "flexible_joint") {
    check_keys(j, {"type", "motor_inertia", "motor_damping", "modes"}, where);
    FlexibleJointParams p;
    p.motor_inertia = j.at("motor_inertia").get<double>();
    p.motor_damping = j.at("motor_damping").get<double>();
    if (j.contains("modes"))
      for (const auto& m : j.at("modes")) {
        check_keys(m, {"stiffness", "damping", "inertia"}, where + ".modes[]");
        p.modes.push_back(FlexibleMode{m.at("stiffness").get<double>(), m.at("damping").get<double>(),
                                       m.at("inertia").get<double>()});
      }
    spec.flexible = p;
  } else if (type == "coupled_cartesian") {
    check_keys(j, {"type", "inertia", "damping", "stiffness"}, where);
    CoupledCartesianParams p;
    p.inertia = matrix3_from(j.at("inertia"), where + ".inertia");
    p.damping = matrix3_from(j.at("damping"), where + ".damping");
    if (j.contains("stiffness")) p.stiffness = matrix3_from(j.at("stiffness"), where + ".stiffness");
    spec.cartesian = p;
  } else if (type == "random_passive") {
    check_keys(j, {"type", "seed", "order", "channels"}, where);
    PlantSpec::RandomSpec r;
    r.seed = j.value("seed", 0ull);
    r.order = j.value("order", 2);
    r.channels = j.value("channels", 1);
    spec.random = r;
  } else {
    throw ConfigError("config: unknown plant type '" + type + "' at " + where);
  }
  return spec;
}

ScenarioSpec scenario_from_json(const json& j, const std::string& where);

ScenarioSpec scenario_from_json(const json& j, const std::string& where) {
  check_keys(j,
             {"name", "type", "amplitude", "duration_s", "peak", "ramp_s", "dwell_s", "tail_s", "omega_rad_s",
              "tones", "band_rad_s", "omegas", "window", "plant", "scenario"},
             where);
  ScenarioSpec s;
  s.type = j.value("type", "step");
  s.name = j.value("name", s.type);
  s.amplitude = number_or(j, "amplitude", 1.0);
  s.duration_s = number_or(j, "duration_s", 3.0);
  s.peak = number_or(j, "peak", 0.1);
  s.ramp_s = number_or(j, "ramp_s", 0.5);
  s.dwell_s = number_or(j, "dwell_s", 1.0);
  s.tail_s = number_or(j, "tail_s", 0.5);
  s.omega_rad_s = number_or(j, "omega_rad_s", 5.0);
  s.tones = static_cast<int>(number_or(j, "tones", 8));
  if (j.contains("band_rad_s")) {
    s.band_lo_rad_s = j.at("band_rad_s").at(0).get<double>();
    s.band_hi_rad_s = j.at("band_rad_s").at(1).get<double>();
  }
  if (j.contains("omegas")) s.omegas = j.at("omegas").get<std::vector<double>>();
  if (j.contains("window")) {
    s.window_t0_s = j.at("window").at(0).get<double>();
    s.window_t1_s = j.at("window").at(1).get<double>();
  }
  if (j.contains("plant")) s.plant = plant_from_json(j.at("plant"), where + ".plant");
  if (j.contains("scenario"))
    s.inner = std::make_shared<ScenarioSpec>(scenario_from_json(j.at("scenario"), where + ".scenario"));
  const std::vector<std::string> known{"step",       "trapezoid",      "random_cosine", "sine",
                                       "bode_sweep", "dynamics_change", "retrain"};
  if (std::find(known.begin(), known.end(), s.type) == known.end())
    throw ConfigError("config: unknown scenario type '" + s.type + "' at " + where);
  if ((s.type == "dynamics_change" || s.type == "retrain") && !s.plant)
    throw ConfigError("config: scenario '" + s.name + "' needs a plant override");
  return s;
}

}  // namespace

int PlantSpec::channels() const {
  if (cartesian) return 3;
  if (random) return random->channels;
  if (preset == "cartesian3") return 3;
  return 1;
}

std::string PlantSpec::label() const {
  if (!preset.empty()) return preset;
  if (flexible) return "flexible_joint";
  if (cartesian) return "coupled_cartesian";
  if (random) return "random_passive";
  return "unknown";
}

ContinuousTf PlantSpec::continuous() const {
  if (preset == "long_plate") return flexible_joint_plant(long_plate_preset());
  if (preset == "short_plate") return flexible_joint_plant(short_plate_preset());
  if (preset == "cartesian3") return coupled_cartesian_plant(cartesian3_preset());
  if (flexible) return flexible_joint_plant(*flexible);
  if (cartesian) return coupled_cartesian_plant(*cartesian);
  throw ConfigError("plant: no continuous form (random plants are natively discrete)");
}

DiscreteSs PlantSpec::realize(double rate_hz) const {
  if (!(rate_hz > 0.0)) throw ConfigError("plant: rate must be > 0");
  if (random) return random_passive_plant(random->seed, random->order, random->channels, 1.0 / rate_hz);
  return discretize(continuous(), 1.0 / rate_hz, Discretization::Zoh);
}

ContinuousTf ReferenceModelSpec::build(int channels) const {
  ContinuousTf base;
  if (type == "first_order") {
    base = first_order_ref(tau_s);
  } else if (type == "second_order") {
    base = second_order_ref(omega_n, zeta);
  } else if (type == "custom") {
    base = ContinuousTf::siso(num, den);
  } else {
    throw ConfigError("config: unknown reference model type '" + type + "'");
  }
  if (channels == 1) return base;
  return ContinuousTf::diagonal(base.entry(0, 0), channels);
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"schema", "seed", "plant", "plant_rate_hz", "controller_rate_hz", "reference_model", "probe",
              "ifir", "pid", "loop", "controllers", "scenarios", "allow_divergence"},
             "$");
  if (j.value("schema", 0) != 1) throw ConfigError("config: schema must be 1");

  ExperimentConfig cfg;
  cfg.source_text = text;
  cfg.seed = j.value("seed", 1ull);
  cfg.plant = j.contains("plant") ? plant_from_json(j.at("plant"), "$.plant") : PlantSpec{"long_plate", {}, {}, {}};
  cfg.plant_rate_hz = number_or(j, "plant_rate_hz", 1000.0);
  cfg.controller_rate_hz = number_or(j, "controller_rate_hz", 200.0);

  if (j.contains("reference_model")) {
    const auto& r = j.at("reference_model");
    check_keys(r, {"type", "tau_s", "omega_n", "zeta", "num", "den"}, "$.reference_model");
    cfg.reference_model.type = r.value("type", "first_order");
    cfg.reference_model.tau_s = number_or(r, "tau_s", 0.05);
    cfg.reference_model.omega_n = number_or(r, "omega_n", 25.0);
    cfg.reference_model.zeta = number_or(r, "zeta", 0.7);
    if (r.contains("num")) cfg.reference_model.num = r.at("num").get<std::vector<double>>();
    if (r.contains("den")) cfg.reference_model.den = r.at("den").get<std::vector<double>>();
  }

  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    check_keys(p, {"duration_s", "num_tones", "freq_range_rad_s", "amplitude", "segments", "closed_loop_kp", "noise_sigma"},
               "$.probe");
    cfg.probe.duration_s = number_or(p, "duration_s", 180.0);
    cfg.probe.num_tones = static_cast<int>(number_or(p, "num_tones", 10));
    if (p.contains("freq_range_rad_s")) {
      cfg.probe.band_lo_rad_s = p.at("freq_range_rad_s").at(0).get<double>();
      cfg.probe.band_hi_rad_s = p.at("freq_range_rad_s").at(1).get<double>();
    }
    cfg.probe.amplitude = number_or(p, "amplitude", 0.1);
    cfg.probe.segments = static_cast<int>(number_or(p, "segments", 1));
    cfg.probe.closed_loop_kp = number_or(p, "closed_loop_kp", 0.0);
    cfg.probe.noise_sigma = number_or(p, "noise_sigma", 0.0);
    if (cfg.probe.duration_s <= 0.0) throw ConfigError("config: probe.duration_s must be > 0");
  }

  if (j.contains("ifir")) {
    const auto& f = j.at("ifir");
    check_keys(f, {"order", "structure", "solver", "inverse"}, "$.ifir");
    cfg.ifir.order = static_cast<int>(number_or(f, "order", 500));
    cfg.ifir.structure = f.value("structure", "full");
    if (cfg.ifir.structure != "full" && cfg.ifir.structure != "siso_diagonal")
      throw ConfigError("config: ifir.structure must be full or siso_diagonal");
    if (f.contains("solver")) {
      const auto& s = f.at("solver");
      check_keys(s, {"rho0", "rho", "grid_m", "epsilon", "ridge", "envelope", "max_iters", "tol"}, "$.ifir.solver");
      cfg.ifir.solver.rho0 = number_or(s, "rho0", 2.0);
      cfg.ifir.solver.rho = number_or(s, "rho", 0.99);
      cfg.ifir.solver.grid_m = static_cast<int>(number_or(s, "grid_m", 1000));
      cfg.ifir.solver.epsilon = number_or_auto(s, "epsilon", -1.0);
      cfg.ifir.solver.ridge = number_or_auto(s, "ridge", -1.0);
      const std::string env = s.value("envelope", "elementwise");
      if (env == "elementwise")
        cfg.ifir.solver.envelope = EnvelopeMode::Elementwise;
      else if (env == "spectral")
        cfg.ifir.solver.envelope = EnvelopeMode::Spectral;
      else
        throw ConfigError("config: envelope must be elementwise or spectral");
      cfg.ifir.solver.max_iters = static_cast<int>(number_or(s, "max_iters", 50000));
      cfg.ifir.solver.tol_feas = number_or(s, "tol", 1e-7);
    }
    if (f.contains("inverse")) {
      const auto& inv = f.at("inverse");
      check_keys(inv, {"pole_scale", "method"}, "$.ifir.inverse");
      cfg.ifir.inverse.pole_scale = number_or(inv, "pole_scale", 10.0);
      const std::string m = inv.value("method", "tustin");
      if (m == "tustin")
        cfg.ifir.inverse.method = Discretization::Tustin;
      else if (m == "zoh")
        cfg.ifir.inverse.method = Discretization::Zoh;
      else if (m == "exact")
        cfg.ifir.inverse.exact_discrete = true;
      else
        throw ConfigError("config: inverse.method must be tustin, zoh or exact");
    }
  }

  if (j.contains("pid")) {
    const auto& p = j.at("pid");
    check_keys(p, {"passive", "tau_d", "rate_hz"}, "$.pid");
    cfg.pid.passive = p.value("passive", true);
    cfg.pid.tau_d = number_or_auto(p, "tau_d", -1.0);
    cfg.pid.rate_hz = number_or(p, "rate_hz", -1.0);
  }

  if (j.contains("loop")) {
    const auto& l = j.at("loop");
    check_keys(l, {"divergence_factor", "grace_samples", "noise_sigma"}, "$.loop");
    cfg.loop.divergence_factor = number_or(l, "divergence_factor", 10.0);
    cfg.loop.grace_samples = static_cast<int>(number_or(l, "grace_samples", 50));
    cfg.loop.noise_sigma = number_or(l, "noise_sigma", 0.0);
  }

  if (j.contains("controllers")) {
    cfg.controllers = j.at("controllers").get<std::vector<std::string>>();
    for (const auto& k : cfg.controllers)
      if (k != "ifir-passive" && k != "ifir-unconstrained" && k != "pid")
        throw ConfigError("config: unknown controller kind '" + k + "'");
  }

  if (j.contains("scenarios")) {
    int idx = 0;
    for (const auto& s : j.at("scenarios"))
      cfg.scenarios.push_back(scenario_from_json(s, "$.scenarios[" + std::to_string(idx++) + "]"));
  }
  cfg.allow_divergence = j.value("allow_divergence", false);

  const double hold = cfg.plant_rate_hz / cfg.controller_rate_hz;
  if (std::abs(hold - std::round(hold)) > 1e-9 || hold < 1.0)
    throw ConfigError("config: plant_rate_hz must be an integer multiple of controller_rate_hz");
  return cfg;
}

ExperimentConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

ProbeData run_probe(const ExperimentConfig& cfg, const PlantSpec& plant, std::uint64_t seed_offset) {
  const double ts = 1.0 / cfg.plant_rate_hz;
  const int ch = plant.channels();
  const DiscreteSs plant_ss = plant.realize(cfg.plant_rate_hz);

  const int segments = std::max(1, cfg.probe.segments);
  const double seg_duration = cfg.probe.duration_s / segments;
  if (seg_duration < 2.0 * M_PI / cfg.probe.band_lo_rad_s)
    throw ConfigError("probe: segment shorter than one period of the slowest tone");

  // Excitation directions. SISO keeps a single axis; 3-channel plants cycle
  // six approximately evenly spread directions; other widths cycle axes.
  std::vector<Eigen::VectorXd> dirs;
  if (ch == 1) {
    dirs.push_back(Eigen::VectorXd::Ones(1));
  } else if (ch == 3) {
    const double s = 1.0 / std::sqrt(2.0);
    for (auto v : {std::vector<double>{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {s, s, 0}, {0, s, s}, {s, 0, s}}) {
      Eigen::VectorXd d(3);
      d << v[0], v[1], v[2];
      dirs.push_back(d);
    }
  } else {
    for (int i = 0; i < ch; ++i) dirs.push_back(Eigen::VectorXd::Unit(ch, i));
  }

  Eigen::Index total = 0;
  std::vector<Signal> scalars;
  for (int s = 0; s < segments; ++s) {
    ProbeConfig pc;
    pc.num_tones = cfg.probe.num_tones;
    pc.freq_low_rad_s = cfg.probe.band_lo_rad_s;
    pc.freq_high_rad_s = cfg.probe.band_hi_rad_s;
    pc.amplitudes.assign(static_cast<std::size_t>(cfg.probe.num_tones), cfg.probe.amplitude);
    pc.duration_s = seg_duration;
    pc.sample_period_s = ts;
    pc.seed = cfg.seed + seed_offset * 7919ull + static_cast<std::uint64_t>(s) * 101ull;
    pc.randomize_amplitudes = segments > 1;
    scalars.push_back(multisine(pc, 1));
    total += scalars.back().length();
  }

  Eigen::MatrixXd excitation(total, ch);
  Eigen::Index at = 0;
  for (int s = 0; s < segments; ++s) {
    const Eigen::VectorXd& d = dirs[static_cast<std::size_t>(s) % dirs.size()];
    excitation.middleRows(at, scalars[static_cast<std::size_t>(s)].length()) =
        scalars[static_cast<std::size_t>(s)].samples * d.transpose();
    at += scalars[static_cast<std::size_t>(s)].length();
  }

  ProbeData data;
  if (cfg.probe.closed_loop_kp > 0.0) {
    // P-velocity-loop probing: excitation acts as the velocity reference.
    const double kp = cfg.probe.closed_loop_kp;
    Eigen::MatrixXd u_rec(total, ch), y_rec(total, ch);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant_ss.states());
    Eigen::VectorXd u = Eigen::VectorXd::Zero(ch);
    for (Eigen::Index t = 0; t < total; ++t) {
      const Eigen::VectorXd y = plant_ss.c * x + plant_ss.d * u;
      u = kp * (excitation.row(t).transpose() - y);
      u_rec.row(t) = u.transpose();
      y_rec.row(t) = (plant_ss.c * x + plant_ss.d * u).transpose();
      x = plant_ss.a * x + plant_ss.b * u;
    }
    data.input = Signal(ts, std::move(u_rec));
    data.output = Signal(ts, std::move(y_rec));
  } else {
    data.input = Signal(ts, std::move(excitation));
    data.output = simulate_lti(plant_ss, data.input);
  }

  if (cfg.probe.noise_sigma > 0.0) {
    std::mt19937_64 rng(cfg.seed * 31337ull + seed_offset + 1ull);
    std::normal_distribution<double> gauss(0.0, cfg.probe.noise_sigma);
    for (Eigen::Index t = 0; t < data.output.length(); ++t)
      for (Eigen::Index c = 0; c < data.output.channels(); ++c) data.output.samples(t, c) += gauss(rng);
  }
  return data;
}

void write_probe(const ProbeData& data, const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Eigen::Index ch = data.input.channels();
  Eigen::MatrixXd all(data.input.length(), 2 * ch);
  all << data.input.samples, data.output.samples;
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < ch; ++c) names.push_back("u_" + std::to_string(c));
  for (Eigen::Index c = 0; c < ch; ++c) names.push_back("y_" + std::to_string(c));
  write_signal_csv(Signal(data.input.sample_period_s, all), out_dir + "/probe.csv", names);

  json meta;
  meta["plant"] = cfg.plant.label();
  meta["plant_rate_hz"] = cfg.plant_rate_hz;
  meta["noise_sigma"] = cfg.probe.noise_sigma;
  meta["duration_s"] = cfg.probe.duration_s;
  meta["segments"] = cfg.probe.segments;
  meta["closed_loop_kp"] = cfg.probe.closed_loop_kp;
  meta["seed"] = cfg.seed;
  std::ofstream(out_dir + "/probe_meta.json") << meta.dump(2) << '\n';
}

ProbeData read_probe(const std::string& csv_path) {
  std::vector<std::string> names;
  const Signal all = read_signal_csv(csv_path, &names);
  Eigen::Index ch = 0;
  for (const auto& n : names)
    if (n.rfind("u_", 0) == 0) ++ch;
  if (ch == 0 || all.channels() != 2 * ch) throw ConfigError("probe: unexpected column layout in " + csv_path);
  ProbeData data;
  data.input = Signal(all.sample_period_s, all.samples.leftCols(ch), all.start_time_s);
  data.output = Signal(all.sample_period_s, all.samples.rightCols(ch), all.start_time_s);
  return data;
}

bool TrainedController::certified_passive() const {
  return std::holds_alternative<IfirParams>(controller) && certificate.verdict;
}

std::string TrainedController::display_name() const {
  if (std::holds_alternative<PidParams>(controller)) return "pid";
  return certified_passive() ? "ifir_passive" : "ifir_unconstrained";
}

namespace {

TrainedController train_ifir(const ExperimentConfig& cfg, const ProbeData& probe, bool passive) {
  const auto t0 = std::chrono::steady_clock::now();
  const int hold = static_cast<int>(std::llround(cfg.plant_rate_hz / cfg.controller_rate_hz));
  const Signal y_c = decimate(probe.output, hold);
  const Signal u_c = decimate(probe.input, hold);
  const ContinuousTf m_r = cfg.reference_model.build(static_cast<int>(y_c.channels()));
  const Signal e = virtual_error(y_c, m_r, cfg.ifir.inverse);

  TrainedController tc;
  tc.kind = passive ? "ifir-passive" : "ifir-unconstrained";

  if (cfg.ifir.structure == "siso_diagonal" && y_c.channels() > 1) {
    const int ch = static_cast<int>(y_c.channels());
    std::vector<IfirParams> per_axis;
    SynthesisReport agg;
    for (int c = 0; c < ch; ++c) {
      const Signal e_i(e.sample_period_s, e.samples.col(c));
      const Signal u_i(u_c.sample_period_s, u_c.samples.col(c));
      RegressionData reg(e_i, u_i, cfg.ifir.order);
      if (passive) {
        SynthesisProblem prob(std::move(reg), cfg.ifir.solver);
        SynthesisReport rep = synthesize_passive(prob);
        agg.objective_value += rep.objective_value;
        agg.unconstrained_objective += rep.unconstrained_objective;
        agg.max_constraint_violation = std::max(agg.max_constraint_violation, rep.max_constraint_violation);
        agg.iterations = std::max(agg.iterations, rep.iterations);
        agg.kkt.stationarity = std::max(agg.kkt.stationarity, rep.kkt.stationarity);
        agg.kkt.feasibility = std::max(agg.kkt.feasibility, rep.kkt.feasibility);
        agg.kkt.complementarity = std::max(agg.kkt.complementarity, rep.kkt.complementarity);
        per_axis.push_back(rep.params);
      } else {
        double resid = 0.0;
        per_axis.push_back(fit_unconstrained(reg, cfg.ifir.solver.ridge, &resid));
        agg.objective_value += resid;
      }
    }
    IfirParams assembled;
    assembled.sample_period_s = per_axis[0].sample_period_s;
    assembled.gamma = Eigen::MatrixXd::Zero(ch, ch);
    assembled.taps.assign(static_cast<std::size_t>(cfg.ifir.order), Eigen::MatrixXd::Zero(ch, ch));
    for (int c = 0; c < ch; ++c) {
      assembled.gamma(c, c) = per_axis[static_cast<std::size_t>(c)].gamma(0, 0);
      for (int k = 0; k < cfg.ifir.order; ++k)
        assembled.taps[static_cast<std::size_t>(k)](c, c) = per_axis[static_cast<std::size_t>(c)].taps[static_cast<std::size_t>(k)](0, 0);
    }
    agg.params = assembled;
    agg.certificate = passivity_margin(assembled, cfg.ifir.solver.dense_grid_points);
    agg.certificate.grid_size = cfg.ifir.solver.grid_m;
    agg.certificate.rho0 = cfg.ifir.solver.rho0;
    agg.certificate.rho = cfg.ifir.solver.rho;
    tc.controller = assembled;
    tc.certificate = agg.certificate;
    tc.report = agg;
  } else {
    RegressionData reg(e, u_c, cfg.ifir.order);
    if (passive) {
      SynthesisProblem prob(std::move(reg), cfg.ifir.solver);
      SynthesisReport rep = synthesize_passive(prob);
      tc.controller = rep.params;
      tc.certificate = rep.certificate;
      tc.report = rep;
    } else {
      SynthesisReport rep;
      double resid = 0.0;
      rep.params = fit_unconstrained(reg, cfg.ifir.solver.ridge, &resid);
      rep.objective_value = resid;
      rep.certificate = passivity_margin(rep.params, cfg.ifir.solver.dense_grid_points);
      tc.controller = rep.params;
      tc.certificate = rep.certificate;
      tc.report = rep;
    }
  }
  tc.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (tc.report) tc.report->wall_time_s = tc.train_seconds;
  return tc;
}

TrainedController train_pid(const ExperimentConfig& cfg, const ProbeData& probe) {
  const auto t0 = std::chrono::steady_clock::now();
  const double rate = cfg.pid.rate_hz > 0.0 ? cfg.pid.rate_hz : cfg.plant_rate_hz;
  const double hold_real = cfg.plant_rate_hz / rate;
  const int hold = static_cast<int>(std::llround(hold_real));
  if (hold < 1 || std::abs(hold_real - hold) > 1e-9)
    throw ConfigError("pid.rate_hz must divide plant_rate_hz");
  const Signal y_c = hold == 1 ? probe.output : decimate(probe.output, hold);
  const Signal u_c = hold == 1 ? probe.input : decimate(probe.input, hold);
  const ContinuousTf m_r = cfg.reference_model.build(static_cast<int>(y_c.channels()));
  const Signal e = virtual_error(y_c, m_r, cfg.ifir.inverse);

  TrainedController tc;
  tc.kind = "pid";
  tc.controller = fit_pid(e, u_c, cfg.pid.passive, cfg.pid.tau_d);
  tc.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tc;
}

}  // namespace

TrainedController run_train(const ExperimentConfig& cfg, const ProbeData& probe, const std::string& kind) {
  if (kind == "ifir-passive") return train_ifir(cfg, probe, true);
  if (kind == "ifir-unconstrained") return train_ifir(cfg, probe, false);
  if (kind == "pid") return train_pid(cfg, probe);
  throw ConfigError("train: unknown controller kind '" + kind + "'");
}

void save_controller(const TrainedController& tc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_controller: cannot open " + path);
  if (std::holds_alternative<IfirParams>(tc.controller))
    out << ifir_to_json(std::get<IfirParams>(tc.controller), tc.certificate) << '\n';
  else
    out << pid_to_json(std::get<PidParams>(tc.controller)) << '\n';
}

TrainedController load_controller(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_controller: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("load_controller: invalid JSON in " + path);
  TrainedController tc;
  if (j.value("type", "") == "pid") {
    tc.kind = "pid";
    tc.controller = pid_from_json(ss.str());
  } else {
    PassivityCertificate cert;
    tc.controller = ifir_from_json(ss.str(), &cert);
    tc.certificate = cert;
    tc.kind = cert.verdict ? "ifir-passive" : "ifir-unconstrained";
  }
  return tc;
}

namespace {

Signal make_reference(const ScenarioSpec& s, double ts, int channels, std::uint64_t seed) {
  if (s.type == "step") return step_profile(s.amplitude, s.duration_s, ts, channels);
  if (s.type == "trapezoid") return trapezoid_profile(s.peak, s.ramp_s, s.dwell_s, s.tail_s, ts, channels);
  if (s.type == "random_cosine")
    return random_cosine_profile(seed, s.tones, s.band_lo_rad_s, s.band_hi_rad_s, s.amplitude, s.duration_s,
                                 ts, channels);
  if (s.type == "sine") {
    const auto n = static_cast<Eigen::Index>(std::llround(s.duration_s / ts));
    Eigen::MatrixXd data(n, channels);
    for (Eigen::Index k = 0; k < n; ++k)
      data.row(k).setConstant(s.amplitude * std::sin(s.omega_rad_s * static_cast<double>(k) * ts));
    return Signal(ts, std::move(data));
  }
  throw ConfigError("scenario: no reference profile for type " + s.type);
}

struct ScenarioOutcome {
  json row;
  bool diverged = false;
};

ScenarioOutcome run_tracking_scenario(const ExperimentConfig& cfg, const ScenarioSpec& s,
                                      const PlantSpec& plant_spec,
                                      const std::vector<TrainedController>& controllers,
                                      const std::string& dir, int jobs) {
  const DiscreteSs plant = plant_spec.realize(cfg.plant_rate_hz);
  LoopConfig lc;
  lc.plant_rate_hz = cfg.plant_rate_hz;
  lc.controller_rate_hz = cfg.controller_rate_hz;
  lc.divergence_factor = cfg.loop.divergence_factor;
  lc.divergence_grace = cfg.loop.grace_samples;
  lc.measurement_noise_sigma = cfg.loop.noise_sigma;
  lc.noise_seed = cfg.seed * 17ull + 3ull;
  const ContinuousTf m_r = cfg.reference_model.build(plant_spec.channels());

  ScenarioOutcome out;
  out.row["name"] = s.name;
  out.row["type"] = s.type;
  out.row["plant"] = plant_spec.label();
  out.row["window"] = {s.window_t0_s, s.window_t1_s};
  json ctrl_rows = json::object();

  if (s.type == "bode_sweep") {
    std::vector<double> omegas = s.omegas;
    if (omegas.empty())
      for (int i = 0; i < 12; ++i) omegas.push_back(0.5 * std::pow(40.0 / 0.5, i / 11.0));
    BodeSweepOptions opts;
    opts.amplitude = s.amplitude;
    for (const auto& tc : controllers) {
      const auto pts = bode_sweep(plant, tc.controller, m_r, omegas, lc, opts);
      TrackingResult shell;
      shell.bode_points = pts;
      shell.reference = shell.desired = shell.measured = shell.control =
          Signal(1.0 / cfg.plant_rate_hz, Eigen::MatrixXd::Zero(1, plant.outputs()));
      shell.nrmse = std::numeric_limits<double>::quiet_NaN();
      const std::string cdir = dir + "/" + tc.display_name();
      write_tracking_result(cdir, shell);
      json cr;
      cr["kind"] = tc.kind;
      cr["certified_passive"] = tc.certified_passive();
      int diverged_points = 0;
      for (const auto& p : pts) diverged_points += p.diverged ? 1 : 0;
      cr["diverged_points"] = diverged_points;
      out.diverged = out.diverged || diverged_points > 0;
      ctrl_rows[tc.display_name()] = cr;
    }
    out.row["controllers"] = ctrl_rows;
    return out;
  }

  const Signal r = make_reference(s, 1.0 / cfg.plant_rate_hz, plant_spec.channels(), cfg.seed * 65537ull + 11ull);

  std::vector<TrackingResult> results(controllers.size());
  const auto worker = [&](std::size_t i) {
    results[i] = simulate_loop(plant, controllers[i].controller, m_r, r, lc);
  };
  if (jobs > 1) {
    std::vector<std::future<void>> futs;
    for (std::size_t i = 0; i < controllers.size(); ++i)
      futs.push_back(std::async(std::launch::async, worker, i));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t i = 0; i < controllers.size(); ++i) worker(i);
  }

  const TrackingResult* pid_result = nullptr;
  for (std::size_t i = 0; i < controllers.size(); ++i)
    if (controllers[i].display_name() == "pid") pid_result = &results[i];

  std::optional<double> headline_improvement;
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    const auto& tc = controllers[i];
    const std::string cdir = dir + "/" + tc.display_name();
    write_tracking_result(cdir, results[i]);
    Evaluation ev = evaluate(results[i], pid_result && pid_result != &results[i] ? pid_result : nullptr,
                             s.window_t0_s, s.window_t1_s);
    json cr;
    cr["kind"] = tc.kind;
    cr["certified_passive"] = tc.certified_passive();
    cr["nrmse"] = std::isfinite(ev.nrmse) && !results[i].diverged ? json(ev.nrmse) : json(nullptr);
    cr["diverged"] = results[i].diverged;
    cr["supply_min"] = results[i].controller_supply_min;
    if (ev.improvement_pct) cr["improvement_vs_pid_pct"] = *ev.improvement_pct;
    if (tc.certified_passive() && ev.improvement_pct && !headline_improvement)
      headline_improvement = ev.improvement_pct;
    out.diverged = out.diverged || results[i].diverged;
    ctrl_rows[tc.display_name()] = cr;
  }
  out.row["controllers"] = ctrl_rows;
  out.row["improvement_pct"] = headline_improvement ? json(*headline_improvement) : json(nullptr);
  return out;
}

}  // namespace

bool run_evaluate(const ExperimentConfig& cfg, const std::vector<TrainedController>& controllers,
                  const std::string& out_dir, int jobs) {
  if (controllers.empty()) throw ConfigError("evaluate: no controllers given");
  fs::create_directories(out_dir);
  if (!cfg.source_text.empty()) std::ofstream(out_dir + "/config.json") << cfg.source_text << '\n';

  json summary;
  summary["schema"] = 1;
  summary["scenarios"] = json::array();
  bool any_divergence = false;

  int idx = 0;
  for (const auto& s : cfg.scenarios) {
    const std::string sdir = out_dir + "/" + s.name;
    if (s.type == "dynamics_change") {
      const ScenarioSpec& inner = s.inner ? *s.inner : ScenarioSpec{s.name, "step", s.amplitude, s.duration_s};
      ScenarioSpec run = inner;
      run.name = s.name;
      run.window_t0_s = s.inner ? s.inner->window_t0_s : s.window_t0_s;
      run.window_t1_s = s.inner ? s.inner->window_t1_s : s.window_t1_s;
      ScenarioOutcome o = run_tracking_scenario(cfg, run, *s.plant, controllers, sdir, jobs);
      o.row["type"] = "dynamics_change";
      summary["scenarios"].push_back(o.row);
      any_divergence = any_divergence || o.diverged;
    } else if (s.type == "retrain") {
      const ProbeData probe2 = run_probe(cfg, *s.plant, 1000ull + static_cast<std::uint64_t>(idx));
      std::vector<TrainedController> retrained;
      fs::create_directories(sdir + "/controllers");
      for (const auto& tc : controllers) {
        ExperimentConfig cfg2 = cfg;
        cfg2.plant = *s.plant;
        TrainedController nt = run_train(cfg2, probe2, tc.kind);
        save_controller(nt, sdir + "/controllers/controller_" + nt.display_name() + ".json");
        retrained.push_back(std::move(nt));
      }
      const ScenarioSpec& inner = s.inner ? *s.inner : ScenarioSpec{s.name, "step", s.amplitude, s.duration_s};
      ScenarioSpec run = inner;
      run.name = s.name;
      run.window_t0_s = s.inner ? s.inner->window_t0_s : s.window_t0_s;
      run.window_t1_s = s.inner ? s.inner->window_t1_s : s.window_t1_s;
      ScenarioOutcome o = run_tracking_scenario(cfg, run, *s.plant, retrained, sdir, jobs);
      o.row["type"] = "retrain";
      summary["scenarios"].push_back(o.row);
      any_divergence = any_divergence || o.diverged;
    } else {
      ScenarioOutcome o = run_tracking_scenario(cfg, s, cfg.plant, controllers, sdir, jobs);
      summary["scenarios"].push_back(o.row);
      any_divergence = any_divergence || o.diverged;
    }
    ++idx;
  }

  std::ofstream(out_dir + "/summary.json") << summary.dump(2) << '\n';
  return any_divergence;
}

bool run_demo(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
  fs::create_directories(out_dir);
  const ProbeData probe = run_probe(cfg, cfg.plant);
  write_probe(probe, cfg, out_dir);

  std::vector<TrainedController> trained;
  for (const auto& kind : cfg.controllers) {
    TrainedController tc = run_train(cfg, probe, kind);
    std::cout << "trained " << tc.display_name() << " in " << tc.train_seconds << " s";
    if (tc.report) std::cout << " (objective " << tc.report->objective_value << ")";
    std::cout << '\n';
    save_controller(tc, out_dir + "/controller_" + tc.display_name() + ".json");
    if (tc.report) {
      json r;
      r["objective_value"] = tc.report->objective_value;
      r["unconstrained_objective"] = tc.report->unconstrained_objective;
      r["max_constraint_violation"] = tc.report->max_constraint_violation;
      r["iterations"] = tc.report->iterations;
      r["wall_time_s"] = tc.report->wall_time_s;
      r["kkt"] = {{"stationarity", tc.report->kkt.stationarity},
                  {"feasibility", tc.report->kkt.feasibility},
                  {"complementarity", tc.report->kkt.complementarity}};
      r["certificate"] = {{"verdict", tc.certificate.verdict},
                          {"dense_check_min_eig", tc.certificate.dense_check_min_eig},
                          {"epsilon", tc.certificate.epsilon},
                          {"grid_size", tc.certificate.grid_size}};
      std::ofstream(out_dir + "/synthesis_report_" + tc.display_name() + ".json") << r.dump(2) << '\n';
    }
    trained.push_back(std::move(tc));
  }

  const bool diverged = run_evaluate(cfg, trained, out_dir + "/eval", jobs);
  render_run_report(out_dir + "/eval");
  return diverged;
}

}  // namespace pivc
