#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "divelab/distill.hpp"
#include "divelab/mathcore.hpp"
#include "divelab/model.hpp"

using namespace divelab;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (double& v : m.data) v = normal(rng);
  return m;
}

void BM_Softmax(benchmark::State& state) {
  const auto C = static_cast<std::size_t>(state.range(0));
  const Matrix z = random_matrix(1, C, 1);
  std::vector<double> out(C);
  for (auto _ : state) {
    softmax_into(z.row(0), 3.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Softmax)->Arg(10)->Arg(100)->Arg(1000);

void BM_DistillLoss(benchmark::State& state) {
  const auto C = static_cast<std::size_t>(state.range(0));
  const Matrix z = random_matrix(2, C, 2);
  std::vector<double> target(C), grad(C);
  teacher_distribution_into(z.row(0), 3.0, 0.5, target);
  std::vector<std::int64_t> counts(C);
  for (std::size_t k = 0; k < C; ++k) counts[k] = static_cast<std::int64_t>(500 / (k + 1)) + 1;
  const std::vector<double> logn = log_counts(counts);
  const DistillConfig cfg{0.5, 3.0, 0.5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(distill_loss(0, target, z.row(1), logn, cfg, grad));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DistillLoss)->Arg(10)->Arg(100)->Arg(1000);

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> sizes = {32, 64, 20};
  const ModelParams params = init_model(sizes, 3);
  const Matrix x = random_matrix(batch, 32, 4);
  const Matrix up = random_matrix(batch, 20, 5);
  for (auto _ : state) {
    const ForwardTrace trace = forward_trace(params, x);
    Gradients g = backward(params, trace, up);
    benchmark::DoNotOptimize(g.layers.front().weights.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_VirtualDistribution(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix z = random_matrix(n, 20, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(virtual_distribution(z, 4.0, true).total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_VirtualDistribution)->Arg(1000)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
