#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <vector>

#include "pnpula/assignment.hpp"
#include "pnpula/gmm.hpp"
#include "pnpula/metrics.hpp"
#include "pnpula/sampler.hpp"

using namespace pnpula;

namespace {

void BM_Assignment(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = gmm_sample(crossed_ridges_mixture(), n, 1);
  const auto b = gmm_sample(crossed_ridges_mixture(), n, 2);
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (a.row(i) - b.row(j)).norm();
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(cost, n).cost);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Assignment)->RangeMultiplier(2)->Range(128, 2048)->Unit(benchmark::kMillisecond);

void BM_ExactDenoiser(benchmark::State& state) {
  const ExactMmseDenoiser den(crossed_ridges_mixture(), 0.05);
  Vector x(2);
  x << 0.3, 1.7;
  for (auto _ : state) benchmark::DoNotOptimize(den(x));
}
BENCHMARK(BM_ExactDenoiser);

void BM_UlaStep(benchmark::State& state) {
  auto den = std::make_shared<const ExactMmseDenoiser>(crossed_ridges_mixture(), 0.05);
  DriftConfig c;
  c.eps = 0.05;
  c.alpha = 0.3;
  c.lambda = 0.0625;
  c.projection = Ball{Vector::Zero(2), 20.0};
  c.denoiser = {"exact", [den](const Vector& x) { return (*den)(x); }};
  const auto fwd = LinearForwardModel::scaled_identity(2, 1.0, 1.0);
  Vector y(2), x(2), z(2);
  y << 0, 8;
  x << 1.0, 5.0;
  z << 0.1, -0.2;
  for (auto _ : state) benchmark::DoNotOptimize(ula_step(c, fwd, y, x, 0.05, z));
}
BENCHMARK(BM_UlaStep);

void BM_W1Estimate(benchmark::State& state) {
  const auto a = gmm_sample(crossed_ridges_mixture(), 20000, 3);
  const auto b = gmm_sample(crossed_ridges_mixture(), 20000, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(wasserstein1_estimate(a, b, 2048, 1, 5).value);
}
BENCHMARK(BM_W1Estimate)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
