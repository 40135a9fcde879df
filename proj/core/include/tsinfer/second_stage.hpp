#pragma once

#include <Eigen/Core>
#include <memory>

#include "tsinfer/first_stage.hpp"
#include "tsinfer/inference.hpp"

namespace tsinfer {

// Linear instrumental-variables second stage: project the outcome and every
// endogenous column on the instruments, then regress the projected outcome on
// [projected endogenous, exogenous].  Numerically identical to two-stage
// least squares when the exogenous columns are included among the
// instruments.  The conditional-variance piece is exactly zero here (given
// the first stage, the second-stage objective has no residual randomness), so
// the simulated distribution is driven entirely by first-stage redraws.
struct IvEstimate {
  Eigen::VectorXd theta;      // endogenous coefficients first, then exogenous
  InfluenceParts parts;       // built at theta
  FirstStageFit first_stage;  // joint projection of [y, endogenous] on Z
  bool weak_design = false;   // projected design close to singular
  double n = 0.0;

  // Influence pieces with the correction term re-evaluated at a shifted
  // coefficient vector; the coefficient redraws are replayed identically.
  InfluenceParts parts_at(const Eigen::VectorXd& theta_alt) const;

 private:
  friend IvEstimate iv_estimate(const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& endog,
                                const Eigen::MatrixXd& exog,
                                const Eigen::MatrixXd& instruments);
  std::shared_ptr<const void> state_;
};

// `exog` may have zero columns; every exogenous column should also appear in
// `instruments` for the two-stage least squares equivalence to hold.  Throws
// RankDeficientError if the instruments are collinear and SingularHessianError
// if the projected design does not identify theta.
IvEstimate iv_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& endog,
                       const Eigen::MatrixXd& exog,
                       const Eigen::MatrixXd& instruments);

// Poisson-type second stage on a regressor that was itself estimated: with
// p_hat = clamp(design * fs.gamma), fit mean exp(theta_0 + theta_1 p_hat_i)
// by pseudo-maximum likelihood (Newton with step halving).  The information
// equality makes the conditional-variance piece equal the curvature; the
// correction term redraws the first-stage coefficients and reprices the
// score.  Redrawn regressor values falling outside (0, 1) are clamped and
// counted in redraw_clamp_count.
struct PoissonEstimate {
  Eigen::VectorXd theta;  // (intercept, slope on the fitted regressor)
  InfluenceParts parts;   // built at theta
  double n = 0.0;
  long iterations = 0;
  std::shared_ptr<long> redraw_clamp_count;

  InfluenceParts parts_at(const Eigen::VectorXd& theta_alt) const;

 private:
  friend PoissonEstimate poisson_estimate(const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& design,
                                          const FirstStageFit& fs);
  std::shared_ptr<const void> state_;
};

// `design` holds the basis rows of the observations entering this stage (a
// subsample of the first-stage fit is fine).  Throws OverflowError if the
// fitted exponent had to be truncated at the optimum and NonConvergenceError
// if Newton stalls.
PoissonEstimate poisson_estimate(const Eigen::VectorXd& y,
                                 const Eigen::MatrixXd& design,
                                 const FirstStageFit& fs);

}  // namespace tsinfer
