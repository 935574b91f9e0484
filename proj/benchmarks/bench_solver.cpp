#include <benchmark/benchmark.h>

#include <random>

#include "pivc/solver.hpp"

namespace {

pivc::Signal random_signal(std::uint64_t seed, Eigen::Index n, Eigen::Index ch) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd data(n, ch);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < ch; ++j) data(i, j) = g(rng);
  return pivc::Signal(0.005, data);
}

void SynthesizePassiveSiso(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const pivc::Signal e = random_signal(1, 20 * m, 1);
  const pivc::Signal u = random_signal(2, 20 * m, 1);
  pivc::SolverSettings st;
  st.rho0 = 2.0;
  st.rho = 0.9;
  st.grid_m = 4 * m;
  st.epsilon = 0.01;
  st.max_iters = 4000;
  for (auto _ : state) {
    pivc::RegressionData reg(e, u, m);
    const auto rep = pivc::synthesize_passive(pivc::SynthesisProblem(std::move(reg), st));
    benchmark::DoNotOptimize(rep.objective_value);
  }
}
BENCHMARK(SynthesizePassiveSiso)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void GramAssembly(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const pivc::Signal e = random_signal(3, 4000, 3);
  const pivc::Signal u = random_signal(4, 4000, 3);
  for (auto _ : state) {
    pivc::RegressionData reg(e, u, m);
    benchmark::DoNotOptimize(reg.gram().norm());
  }
}
BENCHMARK(GramAssembly)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
