#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "tsinfer/rng.hpp"

namespace tsinfer {

// A fitted first-stage regression (possibly several equations on a shared
// design), with the sandwich covariance of the stacked coefficient vector.
struct FirstStageFit {
  Eigen::VectorXd gamma;      // stacked coefficients, equation by equation
  Eigen::MatrixXd cov_gamma;  // covariance of gamma
  Eigen::MatrixXd chol_cov;   // L with L L^T = cov_gamma (cached for draws)
  Eigen::MatrixXd coef;       // p x m, per-equation coefficients
  Eigen::MatrixXd residuals;  // n x m
  // Fitted value(s) for one new design row.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> predict;
};

// OLS of y on Z with heteroskedasticity-robust (HC0) coefficient covariance.
// Throws RankDeficientError (message lists the dependent columns).
FirstStageFit ols_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y);

// Several OLS equations sharing the design Z, estimated jointly: the stacked
// covariance is the sandwich over the stacked per-observation scores, so it
// carries the cross-equation correlation.  Marginal diagonal blocks equal the
// single-equation HC0 covariances.
FirstStageFit joint_ols_fit(const Eigen::MatrixXd& z, const Eigen::MatrixXd& ys);
FirstStageFit joint_ols_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& d);

// Coefficient redraw gamma_hat + L zeta_s; a pure function of (key, s).
Eigen::VectorXd draw_fs(const FirstStageFit& fit, const StreamKey& key,
                        std::uint32_t s);

}  // namespace tsinfer
