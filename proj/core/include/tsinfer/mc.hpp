#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsinfer/dgp.hpp"
#include "tsinfer/inference.hpp"

namespace tsinfer {

struct McOptions {
  DgpSpec spec;
  int reps = 1000;
  int kappa = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;  // confidence level for all recorded intervals
  int threads = 1;      // replications run in parallel; results identical
  // Diagnostic switch: treat the first-stage estimate as exact (zero
  // coefficient covariance), which collapses the correction term to zero.
  bool force_zero_fs = false;
  int grid_points = 512;  // resolution of the distribution grids
  // Called after each finished replication with (completed, total); may be
  // invoked from worker threads concurrently.  Has no effect on results.
  std::function<void(int, int)> progress;
};

struct EstimatorStats {
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;    // population standard deviation across replications
  double rmse = 0.0;  // sqrt(bias^2 + sd^2) exactly
  double mae = 0.0;
};

struct CoverageRates {
  double two_sided = 0.0;
  double lower = 0.0;  // intervals of the form (-inf, u]
  double upper = 0.0;  // intervals of the form [l, +inf)
};

// Distribution summaries for one coordinate of sqrt(n) (theta_hat - theta0):
// the across-replication sample CDF, the zero-mean normal benchmark, the
// average simulated CDF, and the average simulated CDF of the corrected
// estimator, all on a common grid, with L1 distances to the sample CDF.
struct CdfGrid {
  Eigen::VectorXd t;
  Eigen::VectorXd f0;
  Eigen::VectorXd hn;
  Eigen::VectorXd fn;
  Eigen::VectorXd fn_star;
  double w1_hn = 0.0;
  double w1_fn = 0.0;
  double w1_fn_star = 0.0;
};

struct McResult {
  McOptions options;
  Eigen::VectorXd theta0;
  Eigen::Index dim = 0;
  int completed = 0;
  std::vector<int> rep_ids;           // original replication indices
  std::vector<std::string> failures;  // audit trail of excluded replications

  // Per-replication records; rows correspond to rep_ids.
  Eigen::MatrixXd theta_hat;
  Eigen::MatrixXd theta_star_mean;
  Eigen::MatrixXd theta_star_median;
  Eigen::MatrixXd se_hat;           // sqrt of the variance-estimate diagonal
  Eigen::MatrixXd ci_lower;         // simulated two-sided interval
  Eigen::MatrixXd ci_upper;
  Eigen::MatrixXd lower_ci_upper;   // upper end of (-inf, u]
  Eigen::MatrixXd upper_ci_lower;   // lower end of [l, +inf)
  Eigen::MatrixXd norm_ci_lower;    // normal-approximation intervals
  Eigen::MatrixXd norm_ci_upper;
  Eigen::MatrixXd norm_lower_ci_upper;
  Eigen::MatrixXd norm_upper_ci_lower;
  std::vector<char> exhausted;      // redraw-clamp diagnostic fired

  // Aggregates, one entry per coordinate of theta.
  std::vector<EstimatorStats> classical;
  std::vector<EstimatorStats> debiased_mean;
  std::vector<EstimatorStats> debiased_median;
  std::vector<CoverageRates> coverage_sim;
  std::vector<CoverageRates> coverage_normal;
  std::vector<CdfGrid> cdf;
  long exhausted_count = 0;
};

// Run the full study: generate -> fit both stages -> simulate the estimation
// error -> intervals, variance, corrected estimates -> aggregate.  The result
// depends only on (options); thread count changes nothing but wall time.
// Replications whose fit fails are excluded and logged; if 1% or more fail,
// throws NonConvergenceError.
McResult run_mc(const McOptions& options);

// Simulated-interval coverage at the recorded level; LevelMismatchError if
// `level` is not the level the intervals were built at.
std::vector<CoverageRates> coverage(const McResult& result, double level);

// One row per (replication, coordinate) with estimates and interval bounds.
void write_replications_csv(const McResult& result, const std::string& path);
// Columns: coord, t, F0, Hn, Fn, Fn_star.
void write_cdf_csv(const McResult& result, const std::string& path);
// All aggregates plus options, machine-readable.
void write_summary_json(const McResult& result, const std::string& path);

}  // namespace tsinfer
