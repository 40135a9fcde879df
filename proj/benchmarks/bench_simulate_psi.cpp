#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cstdint>

#include "tsinfer/inference.hpp"
#include "tsinfer/rng.hpp"

namespace {

tsinfer::InfluenceParts make_parts(Eigen::Index dim) {
  tsinfer::InfluenceParts parts;
  parts.dim = dim;
  parts.hessian = 2.0 * Eigen::MatrixXd::Identity(dim, dim) +
                  0.3 * Eigen::MatrixXd::Ones(dim, dim);
  parts.cond_variance = Eigen::MatrixXd::Identity(dim, dim);
  parts.e_draw = [dim](const tsinfer::StreamKey& key,
                       std::uint32_t s) -> Eigen::VectorXd {
    tsinfer::RngStream rng(key, s);
    return 0.5 * rng.normal_vector(dim);
  };
  return parts;
}

void BM_SimulatePsi(benchmark::State& state) {
  const auto dim = static_cast<Eigen::Index>(state.range(0));
  const auto kappa = static_cast<int>(state.range(1));
  const auto parts = make_parts(dim);
  const tsinfer::StreamKey key{42, 7};
  for (auto _ : state) {
    auto psi = tsinfer::simulate_psi(parts, 500.0, kappa, key);
    benchmark::DoNotOptimize(psi.draws.data());
  }
  state.SetItemsProcessed(state.iterations() * kappa);
}

void BM_ConfidenceInterval(benchmark::State& state) {
  const auto kappa = static_cast<int>(state.range(0));
  const auto parts = make_parts(2);
  const auto psi = tsinfer::simulate_psi(parts, 500.0, kappa, {42, 7});
  const Eigen::VectorXd theta_hat = Eigen::VectorXd::Constant(2, 1.0);
  for (auto _ : state) {
    auto ci = tsinfer::confidence_interval(theta_hat, psi, 0.95);
    benchmark::DoNotOptimize(ci.data());
  }
}

}  // namespace

BENCHMARK(BM_SimulatePsi)
    ->ArgsProduct({{1, 2, 8}, {200, 1000}})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConfidenceInterval)->Arg(200)->Arg(1000)->Unit(
    benchmark::kMicrosecond);

BENCHMARK_MAIN();
