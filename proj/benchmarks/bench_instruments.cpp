#include <benchmark/benchmark.h>

#include "tsinfer/network.hpp"

namespace {

const tsinfer::SchoolNetwork& shared_network() {
  static const tsinfer::SchoolNetwork net = [] {
    tsinfer::SynthNetOptions opt;
    opt.groups = 4;
    opt.nodes_low = 80;
    opt.nodes_high = 120;
    opt.covariates = 10;
    opt.seed = 7;
    return tsinfer::generate_synthetic_network(opt);
  }();
  return net;
}

void BM_BuildInstruments(benchmark::State& state) {
  const auto& net = shared_network();
  const auto k_max = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto set = tsinfer::build_instruments(net, k_max);
    benchmark::DoNotOptimize(set.z.data());
  }
}

void BM_CivEstimate(benchmark::State& state) {
  const auto& net = shared_network();
  const bool fixed_effects = state.range(0) != 0;
  for (auto _ : state) {
    auto est = tsinfer::civ_estimate(net, fixed_effects);
    benchmark::DoNotOptimize(est.coef.data());
  }
}

void BM_IvmiEstimate(benchmark::State& state) {
  const auto& net = shared_network();
  const auto k_max = static_cast<int>(state.range(0));
  const auto kappa = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto res = tsinfer::ivmi_estimate(net, k_max, true, kappa, 99);
    benchmark::DoNotOptimize(res.classical.coef.data());
  }
}

}  // namespace

BENCHMARK(BM_BuildInstruments)->Arg(0)->Arg(4)->Arg(9)->Unit(
    benchmark::kMillisecond);
BENCHMARK(BM_CivEstimate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IvmiEstimate)
    ->ArgsProduct({{0, 4}, {100, 300}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
