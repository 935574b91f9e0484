// pivc: probe synthetic plants, train iFIR/PID velocity controllers from
// the probing data, evaluate tracking scenarios and render report plots.
#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pivc/experiment.hpp"
#include "pivc/report.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitDivergence = 4;

pivc::ExperimentConfig resolve_config(const std::string& config_path, const std::string& preset,
                                      std::int64_t seed_override) {
  pivc::ExperimentConfig cfg;
  if (!preset.empty() && !config_path.empty())
    throw pivc::ConfigError("pass either --config or --preset, not both");
  if (!preset.empty())
    cfg = pivc::load_preset(preset);
  else if (!config_path.empty())
    cfg = pivc::config_from_file(config_path);
  else
    throw pivc::ConfigError("missing --config or --preset");
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"passive iFIR velocity-control toolkit"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir = "out";
  std::int64_t seed = -1;
  int jobs = 1;
  app.add_option("--config", config_path, "experiment config JSON")->configurable(false);
  app.add_option("--preset", preset, "bundled preset name");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--jobs", jobs, "parallel scenario workers")->check(CLI::PositiveNumber);

  auto* cmd_probe = app.add_subcommand("probe", "run the probing experiment, write probe.csv");
  auto* cmd_train = app.add_subcommand("train", "train a controller from probe data");
  std::string train_kind = "ifir-passive";
  std::string probe_csv;
  cmd_train->add_option("--kind", train_kind, "ifir-passive | ifir-unconstrained | pid");
  cmd_train->add_option("--probe", probe_csv, "probe.csv path (default <out>/probe.csv)");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "run scenarios against trained controllers");
  std::vector<std::string> controller_paths;
  cmd_evaluate->add_option("--controller", controller_paths, "controller JSON file(s)");
  auto* cmd_report = app.add_subcommand("report", "render SVG plots from an evaluate run");
  std::string run_dir;
  cmd_report->add_option("--run", run_dir, "evaluate output directory (default <out>/eval)");
  auto* cmd_demo = app.add_subcommand("demo", "full pipeline: probe, train, evaluate, report");
  auto* cmd_presets = app.add_subcommand("presets", "list bundled presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_presets->parsed()) {
      for (const auto& name : pivc::preset_names()) std::cout << name << '\n';
      return 0;
    }
    if (cmd_report->parsed()) {
      const std::string dir = run_dir.empty() ? out_dir + "/eval" : run_dir;
      pivc::render_run_report(dir);
      std::cout << "report written under " << dir << '\n';
      return 0;
    }

    const pivc::ExperimentConfig cfg = resolve_config(config_path, preset, seed);

    if (cmd_probe->parsed()) {
      const pivc::ProbeData data = pivc::run_probe(cfg, cfg.plant);
      pivc::write_probe(data, cfg, out_dir);
      std::cout << "probe written to " << out_dir << "/probe.csv (" << data.input.length()
                << " samples)" << '\n';
      return 0;
    }
    if (cmd_train->parsed()) {
      const std::string probe_path = probe_csv.empty() ? out_dir + "/probe.csv" : probe_csv;
      const pivc::ProbeData data = pivc::read_probe(probe_path);
      pivc::TrainedController tc;
      try {
        tc = pivc::run_train(cfg, data, train_kind);
      } catch (const pivc::ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitSolver;
      }
      std::filesystem::create_directories(out_dir);
      const std::string path = out_dir + "/controller_" + tc.display_name() + ".json";
      pivc::save_controller(tc, path);
      std::cout << "trained " << tc.display_name() << " in " << tc.train_seconds << " s -> " << path << '\n';
      if (tc.report)
        std::cout << "  objective " << tc.report->objective_value << ", max violation "
                  << tc.report->max_constraint_violation << ", passive certificate "
                  << (tc.certificate.verdict ? "true" : "false") << '\n';
      return 0;
    }
    if (cmd_evaluate->parsed()) {
      if (controller_paths.empty()) throw pivc::ConfigError("evaluate: pass at least one --controller");
      std::vector<pivc::TrainedController> controllers;
      for (const auto& p : controller_paths) controllers.push_back(pivc::load_controller(p));
      const bool diverged = pivc::run_evaluate(cfg, controllers, out_dir + "/eval", jobs);
      std::cout << "summary written to " << out_dir << "/eval/summary.json" << '\n';
      if (diverged && !cfg.allow_divergence) {
        std::cerr << "divergence detected\n";
        return kExitDivergence;
      }
      return 0;
    }
    if (cmd_demo->parsed()) {
      bool diverged = false;
      try {
        diverged = pivc::run_demo(cfg, out_dir, jobs);
      } catch (const pivc::ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitSolver;
      }
      std::cout << "demo complete under " << out_dir << '\n';
      if (diverged && !cfg.allow_divergence) {
        std::cerr << "divergence detected\n";
        return kExitDivergence;
      }
      return 0;
    }
  } catch (const pivc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
