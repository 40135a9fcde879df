#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "tsinfer/inference.hpp"
#include "tsinfer/rng.hpp"

namespace tsinfer {

// One group of a grouped social network: a directed adjacency matrix with
// zero diagonal, node attributes, and node outcomes.  Edges never cross
// groups by construction.
struct NetworkGroup {
  std::string id;
  Eigen::MatrixXd adjacency;  // (i, j) > 0 when i names j a friend
  Eigen::MatrixXd x;          // nodes x covariates
  Eigen::VectorXd y;
};

struct SchoolNetwork {
  std::vector<NetworkGroup> groups;
  Eigen::Index total_nodes() const;
  Eigen::Index covariates() const;
};

// Validates shapes, zero diagonals and a consistent covariate count.
SchoolNetwork make_network(std::vector<NetworkGroup> groups);

// Row-stochastic version: each row divided by its out-degree; rows of
// isolated nodes stay zero.
Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency);

long isolate_count(const SchoolNetwork& net);

// Instrument columns for the average-peer-outcome regressor: per group the
// blocks Gt^{2+p} X for p = 0..k_max (Gt the row-normalized adjacency),
// stacked over groups.  Numerically collinear columns are dropped (their
// pre-drop indices reported) and the survivors are scaled to unit norm,
// which changes nothing about the projection they span.
struct InstrumentSet {
  Eigen::MatrixXd z;
  std::vector<int> dropped;
};
InstrumentSet build_instruments(const SchoolNetwork& net, int k_max);

// Estimated linear-in-means model
//   y = alpha_r 1 + theta1 Gt y + X theta2 + Gt X theta3 + eps.
// coef stacks [theta1, theta2, theta3, intercept (without fixed effects)].
struct PeerEstimate {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // heteroskedasticity-robust covariance of coef
  Eigen::VectorXd alpha;  // per-group intercepts (recovered under demeaning)
  std::vector<std::string> group_ids;
  Eigen::Index n_covariates = 0;
  bool fixed_effects = false;
  bool weak_design = false;
  double first_stage_f = 0.0;  // excluded instruments' joint F
  long isolates = 0;

  double theta1() const { return coef[0]; }
  double theta1_se() const;
  Eigen::VectorXd theta2() const { return coef.segment(1, n_covariates); }
  Eigen::VectorXd theta3() const {
    return coef.segment(1 + n_covariates, n_covariates);
  }
};

// Least-squares baseline: regress y on [Gt y, X, Gt X] directly.  Biased for
// theta1 when outcomes are simultaneous; reported for comparison only.
PeerEstimate ols_estimate(const SchoolNetwork& net, bool fixed_effects);

// Two-stage least squares instrumenting the peer average of y with the
// peer-average-of-peer-average attributes Gt^2 X.
PeerEstimate civ_estimate(const SchoolNetwork& net, bool fixed_effects);

// Re-estimates with the model-implied best instrument for Gt y,
//   Gt (I - theta1 Gt)^{-1} (alpha_r 1 + X theta2 + Gt X theta3),
// evaluated at a previous estimate (group-level linear solves).  Requires
// |theta1| < 1; throws OutOfRangeError otherwise.
PeerEstimate oiv_estimate(const SchoolNetwork& net, const PeerEstimate& pilot,
                          bool fixed_effects);

// Many-instrument IV with simulation-based inference: projects outcome and
// peer average on [exogenous, instruments], estimates by least squares of
// the projections, simulates the estimation error from first-stage
// coefficient redraws, and corrects the finite-sample bias.
struct IvmiResult {
  PeerEstimate classical;  // cov from the simulated variance estimator
  PeerEstimate debiased;
  Eigen::MatrixXd ci_classical;  // coef rows x (lower, upper)
  Eigen::MatrixXd ci_debiased;
  double level = 0.95;
  Eigen::Index instrument_count = 0;  // surviving excluded instruments
  long pruned_instruments = 0;
};
IvmiResult ivmi_estimate(const SchoolNetwork& net, int k_max,
                         bool fixed_effects, int kappa, std::uint64_t seed,
                         double level = 0.95);

// Equilibrium amplification 1 / (1 - theta1); OutOfRangeError if
// |theta1| >= 1 (no unique equilibrium).
double social_multiplier(double theta1);
double social_multiplier(const PeerEstimate& est);

// Synthetic grouped network shaped like a school friendship survey, with
// outcomes drawn from the linear-in-means equilibrium.  Used for tests and
// as a stand-in for restricted-access data.
struct SynthNetOptions {
  int groups = 16;
  Eigen::Index nodes_low = 120;
  Eigen::Index nodes_high = 220;
  int covariates = 25;
  double theta1 = 0.4;
  double mean_degree = 6.0;
  double alpha_sd = 0.3;
  double noise_sd = 2.0;
  std::uint64_t seed = 1;
};
SchoolNetwork generate_synthetic_network(const SynthNetOptions& options);

}  // namespace tsinfer
