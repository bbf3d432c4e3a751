#include "kprop/flopcount.hpp"
#include "kprop/network.hpp"
#include "kprop/propagate.hpp"
#include "kprop/rng.hpp"
#include "kprop/symtensor.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace kprop;

SymTensor random_tensor(int rank, int n, std::uint64_t seed) {
  SymTensor t(rank, n);
  Rng gen(seed);
  for (auto& v : t.data()) v = gen.normal();
  t.symmetrize();
  return t;
}

Eigen::MatrixXd random_matrix(int n, std::uint64_t seed) {
  Rng gen(seed);
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gen.normal() / std::sqrt(n);
  return w;
}

void BM_SymmetricContract(benchmark::State& state) {
  const int rank = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const SymTensor t = random_tensor(rank, n, 1);
  const Eigen::MatrixXd w = random_matrix(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(symmetric_contract(t, w));
  state.counters["dense_flops"] =
      benchmark::Counter(2.0 * rank * std::pow(n, rank + 1), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_SymmetricContract)->Args({2, 64})->Args({2, 256})->Args({3, 32})->Args({3, 64})->Args({4, 16});

void BM_Propagate(benchmark::State& state) {
  EstimatorConfig cfg;
  cfg.K = static_cast<int>(state.range(0));
  cfg.variant = static_cast<Variant>(state.range(2));
  const int n = static_cast<int>(state.range(1));
  const NetworkSpec spec = NetworkSpec::uniform(4, n, Activation::relu());
  const Weights w = init_weights(spec, {7, 0});
  for (auto _ : state) benchmark::DoNotOptimize(propagate(spec, w, cfg).estimate);
  state.counters["model_flops"] =
      benchmark::Counter(flops_estimator(spec, cfg), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Propagate)
    ->ArgNames({"K", "n", "variant"})
    ->Args({1, 256, static_cast<int>(Variant::basic)})
    ->Args({2, 64, static_cast<int>(Variant::basic)})
    ->Args({2, 128, static_cast<int>(Variant::basic)})
    ->Args({3, 16, static_cast<int>(Variant::basic)})
    ->Args({3, 32, static_cast<int>(Variant::basic)})
    ->Args({3, 32, static_cast<int>(Variant::factorized)})
    ->Args({3, 64, static_cast<int>(Variant::factorized)})
    ->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::uint64_t samples = static_cast<std::uint64_t>(state.range(1));
  const NetworkSpec spec = NetworkSpec::uniform(4, n, Activation::relu());
  const Weights w = init_weights(spec, {7, 0});
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_estimate(spec, w, samples, {3, 0}, 1).mean);
  state.counters["model_flops"] =
      benchmark::Counter(flops_mc(spec, samples), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_MonteCarlo)->Args({64, 1 << 14})->Args({256, 1 << 12})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
