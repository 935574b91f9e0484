#include "pivc/experiment.hpp"

#include <map>

namespace pivc {

namespace {

// Bundled experiment groups: joint-space nominal / dynamics-change /
// aggressive-reference, and the three Cartesian designs.
const std::map<std::string, const char*>& preset_map() {
  static const std::map<std::string, const char*> presets = {
      {"joint_nominal", R"JSON({
  "schema": 1,
  "seed": 1,
  "plant": "long_plate",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "first_order", "tau_s": 0.05},
  "probe": {"duration_s": 180, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.05, "segments": 6},
  "ifir": {"order": 500, "solver": {"rho0": 10, "rho": 0.99, "grid_m": 2000, "epsilon": 0.02, "max_iters": 20000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "pid"],
  "scenarios": [
    {"name": "step", "type": "step", "amplitude": 1.0, "duration_s": 3.0},
    {"name": "bode", "type": "bode_sweep", "amplitude": 1.0}
  ]
})JSON"},
      {"joint_dynamics_change", R"JSON({
  "schema": 1,
  "seed": 1,
  "plant": "long_plate",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "first_order", "tau_s": 0.05},
  "probe": {"duration_s": 180, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.05, "segments": 6},
  "ifir": {"order": 500, "solver": {"rho0": 10, "rho": 0.99, "grid_m": 2000, "epsilon": 0.02, "max_iters": 20000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "pid"],
  "scenarios": [
    {"name": "nominal_step", "type": "step", "amplitude": 1.0, "duration_s": 3.0},
    {"name": "changed_step", "type": "dynamics_change", "plant": "short_plate",
     "scenario": {"name": "changed_step", "type": "step", "amplitude": 1.0, "duration_s": 3.0}},
    {"name": "retrained_step", "type": "retrain", "plant": "short_plate",
     "scenario": {"name": "retrained_step", "type": "step", "amplitude": 1.0, "duration_s": 3.0}}
  ]
})JSON"},
      {"joint_aggressive", R"JSON({
  "schema": 1,
  "seed": 7,
  "plant": "long_plate",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "second_order", "omega_n": 10, "zeta": 0.3},
  "probe": {"duration_s": 180, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.05, "segments": 6},
  "ifir": {"order": 500, "solver": {"rho0": 10, "rho": 0.99, "grid_m": 2000, "epsilon": 0.02, "max_iters": 20000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "ifir-unconstrained", "pid"],
  "allow_divergence": true,
  "scenarios": [
    {"name": "step", "type": "step", "amplitude": 1.0, "duration_s": 3.0},
    {"name": "sine", "type": "sine", "omega_rad_s": 8.0, "amplitude": 1.0, "duration_s": 10.0}
  ]
})JSON"},
      {"cartesian_siso", R"JSON({
  "schema": 1,
  "seed": 3,
  "plant": "cartesian3",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "first_order", "tau_s": 0.05},
  "probe": {"duration_s": 60, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.3, "segments": 6},
  "ifir": {"order": 500, "structure": "siso_diagonal",
           "solver": {"rho0": 30, "rho": 0.95, "grid_m": 1500, "epsilon": 0.05, "max_iters": 20000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "pid"],
  "scenarios": [
    {"name": "random", "type": "random_cosine", "tones": 8, "band_rad_s": [0.5, 8], "amplitude": 0.1, "duration_s": 10.0},
    {"name": "trapezoid", "type": "trapezoid", "peak": 0.1, "ramp_s": 0.5, "dwell_s": 1.0, "tail_s": 1.0},
    {"name": "bode", "type": "bode_sweep", "amplitude": 0.1}
  ]
})JSON"},
      {"cartesian_mimo_mr1", R"JSON({
  "schema": 1,
  "seed": 3,
  "plant": "cartesian3",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "first_order", "tau_s": 0.05},
  "probe": {"duration_s": 60, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.3, "segments": 6},
  "ifir": {"order": 200, "solver": {"rho0": 30, "rho": 0.95, "grid_m": 900, "epsilon": 0.05, "max_iters": 15000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "pid"],
  "scenarios": [
    {"name": "random", "type": "random_cosine", "tones": 8, "band_rad_s": [0.5, 8], "amplitude": 0.1, "duration_s": 10.0},
    {"name": "trapezoid", "type": "trapezoid", "peak": 0.1, "ramp_s": 0.5, "dwell_s": 1.0, "tail_s": 1.0}
  ]
})JSON"},
      {"cartesian_mimo_mr2", R"JSON({
  "schema": 1,
  "seed": 3,
  "plant": "cartesian3",
  "plant_rate_hz": 1000,
  "controller_rate_hz": 200,
  "reference_model": {"type": "second_order", "omega_n": 25, "zeta": 0.7},
  "probe": {"duration_s": 60, "num_tones": 10, "freq_range_rad_s": [1, 10], "amplitude": 0.3, "segments": 6},
  "ifir": {"order": 200, "solver": {"rho0": 60, "rho": 0.95, "grid_m": 900, "epsilon": 0.05, "max_iters": 15000}},
  "pid": {"passive": true},
  "controllers": ["ifir-passive", "pid"],
  "scenarios": [
    {"name": "random", "type": "random_cosine", "tones": 8, "band_rad_s": [0.5, 8], "amplitude": 0.1, "duration_s": 10.0},
    {"name": "trapezoid", "type": "trapezoid", "peak": 0.1, "ramp_s": 0.5, "dwell_s": 1.0, "tail_s": 1.0}
  ]
})JSON"}};
  return presets;
}

}  // namespace

ExperimentConfig load_preset(const std::string& name) {
  const auto& m = preset_map();
  const auto it = m.find(name);
  if (it == m.end()) throw ConfigError("unknown preset '" + name + "'");
  return config_from_json_text(it->second);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : preset_map()) names.push_back(k);
  return names;
}

}  // namespace pivc
