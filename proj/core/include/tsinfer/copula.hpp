#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "tsinfer/garch.hpp"
#include "tsinfer/inference.hpp"

namespace tsinfer {

// Jointly fitted marginal AR-GARCH models for a panel of series, with the
// covariance of the stacked parameter vector assembled from per-series
// Hessians and the long-run covariance of the stacked scores.
struct GarchBundle {
  std::vector<GarchFit> fits;
  Eigen::MatrixXd y;         // n x k raw series
  Eigen::MatrixXd pit;       // (n-1) x k transforms at the fitted parameters
  Eigen::VectorXd beta;      // stacked natural parameters, 6k
  Eigen::MatrixXd cov_beta;  // covariance of beta
  Eigen::MatrixXd chol_cov;  // L with L L^T = cov_beta
  double n_eff = 0.0;        // observations entering each likelihood (n - 1)
};

GarchBundle garch_bundle_fit(const Eigen::MatrixXd& y);

// Redraw diagnostics: how many simulation draws exhausted the
// reject-and-redraw budget and had to be clamped into the admissible set.
struct RedrawStats {
  long total = 0;
  long clamped = 0;
  bool exhausted() const { return total > 0 && 2 * clamped > total; }
};

// Dependence-parameter estimate of the Clayton copula over the PIT panel,
// with the influence pieces needed to simulate its estimation error.  The
// conditional variance of the influence function is not estimable here (the
// data enter both stages), so only the curvature and e-part are provided and
// downstream summaries use a normal approximation.
struct CopulaEstimate {
  double theta = 0.0;
  InfluenceParts parts;                // built at theta
  std::shared_ptr<RedrawStats> stats;  // shared by all e_draw closures
  double n_eff = 0.0;

  // Influence pieces re-evaluated at a shifted dependence parameter; the
  // parameter redraws (and their clamps) are replayed identically.
  InfluenceParts parts_at(double theta_alt) const;

 private:
  friend CopulaEstimate copula_estimate(const Eigen::MatrixXd& u,
                                        const GarchBundle& fs);
  std::shared_ptr<const GarchBundle> bundle_;
  std::shared_ptr<void> cache_;
};

// Fit theta by maximum likelihood (safeguarded Newton on (1e-3, 50)) on the
// PIT panel u; the bundle supplies the parameter redraws behind e_draw.
// Throws NonConvergenceError if no interior optimum exists in the bracket.
CopulaEstimate copula_estimate(const Eigen::MatrixXd& u, const GarchBundle& fs);
CopulaEstimate copula_estimate(const GarchBundle& fs);

}  // namespace tsinfer
