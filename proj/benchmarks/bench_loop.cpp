#include <benchmark/benchmark.h>

#include "pivc/loop.hpp"
#include "pivc/plants.hpp"

namespace {

void SimulateLoopMultirate(benchmark::State& state) {
  const double ts = 1e-3;
  const pivc::DiscreteSs plant =
      pivc::discretize(pivc::flexible_joint_plant(pivc::long_plate_preset()), ts, pivc::Discretization::Zoh);
  pivc::IfirParams ctrl;
  for (int k = 0; k < static_cast<int>(state.range(0)); ++k)
    ctrl.taps.push_back(Eigen::MatrixXd::Constant(1, 1, 0.5 / (k + 1.0)));
  ctrl.gamma = Eigen::MatrixXd::Constant(1, 1, 1.0);
  ctrl.sample_period_s = 0.005;
  const pivc::Signal r = pivc::step_profile(1.0, 5.0, ts);
  const pivc::ContinuousTf mr = pivc::first_order_ref(0.05);
  for (auto _ : state) {
    const auto res = pivc::simulate_loop(plant, ctrl, mr, r, pivc::LoopConfig{});
    benchmark::DoNotOptimize(res.nrmse);
  }
}
BENCHMARK(SimulateLoopMultirate)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

