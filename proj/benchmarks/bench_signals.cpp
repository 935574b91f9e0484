#include <benchmark/benchmark.h>

#include <cmath>

#include "pivc/signal.hpp"

namespace {

void DftGainPhase(benchmark::State& state) {
  const double ts = 1e-3;
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Eigen::MatrixXd in(n, 1), out(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    in(k, 0) = std::sin(5.0 * static_cast<double>(k) * ts);
    out(k, 0) = 2.0 * std::sin(5.0 * static_cast<double>(k) * ts - 0.4);
  }
  const pivc::Signal u(ts, in), y(ts, out);
  for (auto _ : state) {
    const auto pt = pivc::dft_gain_phase(u, y, 5.0);
    benchmark::DoNotOptimize(pt.gain);
  }
}
BENCHMARK(DftGainPhase)->Arg(20000)->Arg(100000);

void Multisine(benchmark::State& state) {
  pivc::ProbeConfig cfg;
  cfg.duration_s = static_cast<double>(state.range(0));
  cfg.sample_period_s = 1e-3;
  for (auto _ : state) {
    const auto s = pivc::multisine(cfg);
    benchmark::DoNotOptimize(s.samples.sum());
  }
}
BENCHMARK(Multisine)->Arg(30)->Arg(180)->Unit(benchmark::kMillisecond);

}  // namespace

