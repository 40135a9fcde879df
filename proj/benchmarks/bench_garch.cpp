#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "tsinfer/garch.hpp"
#include "tsinfer/rng.hpp"

namespace {

const tsinfer::GarchParams kTrue{0.1, 0.4, 0.05, 0.05, 0.9, 6.0};

Eigen::VectorXd simulate_series(Eigen::Index n, std::uint64_t seed) {
  tsinfer::RngStream rng(tsinfer::StreamKey{seed, 0xb6}, 0);
  const Eigen::Index burn = 500;
  double sigma2 = kTrue.beta0 / (1.0 - kTrue.beta1 - kTrue.beta2);
  double prev_y = kTrue.phi0 / (1.0 - kTrue.phi1);
  double prev_resid = 0.0;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < burn + n; ++i) {
    sigma2 = kTrue.beta0 + kTrue.beta1 * prev_resid * prev_resid +
             kTrue.beta2 * sigma2;
    const double resid =
        std::sqrt(sigma2) * tsinfer::std_t_quantile(rng.uniform(), kTrue.nu);
    const double yt = kTrue.phi0 + kTrue.phi1 * prev_y + resid;
    if (i >= burn) y[i - burn] = yt;
    prev_y = yt;
    prev_resid = resid;
  }
  return y;
}

void BM_GarchLoglikPath(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::VectorXd y = simulate_series(n, 11);
  for (auto _ : state) {
    auto ll = tsinfer::garch_loglik_path(y, kTrue);
    benchmark::DoNotOptimize(ll.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_ArGarchFit(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::VectorXd y = simulate_series(n, 11);
  for (auto _ : state) {
    auto fit = tsinfer::ar_garch_fit(y);
    benchmark::DoNotOptimize(fit.loglik);
  }
}

}  // namespace

BENCHMARK(BM_GarchLoglikPath)
    ->Arg(250)
    ->Arg(1000)
    ->Arg(4000)
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ArGarchFit)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
