#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pivc/loop.hpp"
#include "pivc/plants.hpp"
#include "pivc/solver.hpp"

namespace pivc {

/// Configuration problems (bad schema, unknown keys, invalid values).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlantSpec {
  std::string preset;  // long_plate | short_plate | cartesian3, or "" for custom
  std::optional<FlexibleJointParams> flexible;
  std::optional<CoupledCartesianParams> cartesian;
  struct RandomSpec {
    std::uint64_t seed = 0;
    int order = 2;
    int channels = 1;
  };
  std::optional<RandomSpec> random;

  int channels() const;
  std::string label() const;
  DiscreteSs realize(double rate_hz) const;
  ContinuousTf continuous() const;  // throws for random (natively discrete) plants
};

struct ReferenceModelSpec {
  std::string type = "first_order";  // first_order | second_order | custom
  double tau_s = 0.05;
  double omega_n = 25.0;
  double zeta = 0.7;
  std::vector<double> num, den;  // custom

  ContinuousTf build(int channels) const;
};

struct ProbeSettings {
  double duration_s = 180.0;
  int num_tones = 10;
  double band_lo_rad_s = 1.0;
  double band_hi_rad_s = 10.0;
  double amplitude = 0.1;  // per-tone amplitude
  int segments = 1;        // re-seeded segments; MIMO cycles excitation directions
  double closed_loop_kp = 0.0;
  double noise_sigma = 0.0;
};

struct IfirSettings {
  int order = 500;
  SolverSettings solver;
  std::string structure = "full";  // full | siso_diagonal
  InverseConfig inverse;
};

struct PidSettings {
  bool passive = true;
  double tau_d = -1.0;    // <0: 2*Ts
  double rate_hz = -1.0;  // <0: plant rate
};

struct LoopSettings {
  double divergence_factor = 10.0;
  int grace_samples = 50;
  double noise_sigma = 0.0;
};

struct ScenarioSpec {
  std::string name;
  std::string type;  // step | trapezoid | random_cosine | sine | bode_sweep | dynamics_change | retrain
  double amplitude = 1.0;
  double duration_s = 3.0;
  double peak = 0.1;
  double ramp_s = 0.5;
  double dwell_s = 1.0;
  double tail_s = 0.5;
  double omega_rad_s = 5.0;
  int tones = 8;
  double band_lo_rad_s = 0.5;
  double band_hi_rad_s = 8.0;
  std::vector<double> omegas;
  double window_t0_s = 0.0;
  double window_t1_s = -1.0;
  std::optional<PlantSpec> plant;           // dynamics_change / retrain
  std::shared_ptr<ScenarioSpec> inner;      // scenario run on the swapped plant
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  PlantSpec plant;
  double plant_rate_hz = 1000.0;
  double controller_rate_hz = 200.0;
  ReferenceModelSpec reference_model;
  ProbeSettings probe;
  IfirSettings ifir;
  PidSettings pid;
  LoopSettings loop;
  std::vector<std::string> controllers{"ifir-passive", "pid"};
  std::vector<ScenarioSpec> scenarios;
  bool allow_divergence = false;
  std::string source_text;  // original JSON, persisted alongside runs
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_file(const std::string& path);
ExperimentConfig load_preset(const std::string& name);
std::vector<std::string> preset_names();

struct ProbeData {
  Signal input;   // plant-rate torque/force record
  Signal output;  // plant-rate velocity record
};

ProbeData run_probe(const ExperimentConfig& cfg, const PlantSpec& plant, std::uint64_t seed_offset = 0);
void write_probe(const ProbeData& data, const ExperimentConfig& cfg, const std::string& out_dir);
ProbeData read_probe(const std::string& csv_path);

struct TrainedController {
  std::string kind;  // ifir-passive | ifir-unconstrained | pid
  Controller controller;
  PassivityCertificate certificate;  // meaningful for iFIR kinds
  std::optional<SynthesisReport> report;
  double train_seconds = 0.0;

  bool certified_passive() const;
  std::string display_name() const;
};

TrainedController run_train(const ExperimentConfig& cfg, const ProbeData& probe, const std::string& kind);
void save_controller(const TrainedController& tc, const std::string& path);
TrainedController load_controller(const std::string& path);

/// Runs every scenario against every controller; writes per-scenario
/// TrackingResult directories plus summary.json. Returns true when any
/// loop tripped the divergence guard.
bool run_evaluate(const ExperimentConfig& cfg, const std::vector<TrainedController>& controllers,
                  const std::string& out_dir, int jobs = 1);

/// probe -> train -> evaluate -> report on one config.
bool run_demo(const ExperimentConfig& cfg, const std::string& out_dir, int jobs = 1);

}  // namespace pivc
