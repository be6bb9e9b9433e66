#include <benchmark/benchmark.h>

#include <random>

#include "imcsim/energy.hpp"
#include "imcsim/formats.hpp"
#include "imcsim/imc_array.hpp"

using namespace imcsim;

namespace {

imc::IntMatrix random_matrix(int d, int n, int lim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(-lim, lim);
  imc::IntMatrix m(d, n);
  for (auto& v : m.data) v = u(rng);
  return m;
}

void BM_ForwardMvm(benchmark::State& state) {
  const CimaConfig cfg;
  const int d = static_cast<int>(state.range(0));
  const int n = 64;
  const int vectors = 16;
  const auto stored = imc::load_partitioned(random_matrix(d, n, 8, 1), formats::kWeightBits, cfg);
  std::mt19937_64 rng(2);
  std::vector<std::int32_t> a(static_cast<std::size_t>(d) * vectors);
  for (auto& v : a) v = static_cast<std::int32_t>(rng() % 17);
  const auto policy = vref::VrefPolicy::variable(0.8);
  for (auto _ : state) {
    auto r = imc::mvm_batch(imc::InputFormat::pm1(formats::kActivationBits), a, vectors, stored, policy, cfg);
    benchmark::DoNotOptimize(r.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d) * n * vectors);
}
BENCHMARK(BM_ForwardMvm)->Arg(256)->Arg(2304)->Arg(4608);

void BM_Radix4Mvm(benchmark::State& state) {
  const CimaConfig cfg;
  const int d = static_cast<int>(state.range(0));
  const int n = 64;
  const int vectors = 16;
  const auto stored = imc::load_partitioned(random_matrix(d, n, 8, 3), formats::kWeightBits, cfg);
  std::mt19937_64 rng(4);
  std::vector<std::int32_t> g(static_cast<std::size_t>(d) * vectors, 0);
  for (auto& v : g) {
    if (rng() % 4 == 0) v = (rng() % 2 ? 1 : -1) * (1 << (2 * (rng() % 7)));
  }
  const auto policy = vref::VrefPolicy::variable(0.8);
  for (auto _ : state) {
    auto r = imc::mvm_batch(imc::InputFormat::radix4(), g, vectors, stored, policy, cfg);
    benchmark::DoNotOptimize(r.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d) * n * vectors);
}
BENCHMARK(BM_Radix4Mvm)->Arg(256)->Arg(2304)->Arg(4608);

void BM_Radix4Quantize(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> ln(0.0, 2.0);
  std::vector<double> g(static_cast<std::size_t>(state.range(0)));
  for (auto& v : g) v = (rng() % 2 ? 1.0 : -1.0) * ln(rng);
  const auto s = formats::gradscale_update(formats::GradScaleState{}, g);
  for (auto _ : state) {
    auto q = formats::radix4_quantize(g, s);
    benchmark::DoNotOptimize(q.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Radix4Quantize)->Arg(1 << 16);

void BM_ScenarioReport(benchmark::State& state) {
  const auto model = vgg_lite();
  const energy::EnergyFactors f;
  for (auto _ : state) {
    auto r = energy::scenario_report(model, 128, energy::Scenario::kImcAllVariable, energy::LayerFilter::kAll, f);
    benchmark::DoNotOptimize(r.ratio);
  }
}
BENCHMARK(BM_ScenarioReport);

}  // namespace
BENCHMARK_MAIN();
