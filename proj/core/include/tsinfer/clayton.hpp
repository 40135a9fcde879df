#pragma once

#include <Eigen/Core>

namespace tsinfer {

// Margins are clamped into [kUClamp, 1 - kUClamp] before logs and powers.
inline constexpr double kUClamp = 1e-10;

// Log density of the k-variate Clayton copula (k >= 2, theta > 0):
//   sum_{p=1}^{k-1} log(p theta + 1) - (theta + 1) sum_p log u_p
//     - (k + 1/theta) log S,   S = sum_p u_p^{-theta} - k + 1.
// Computed in log space so large theta * |log u| cannot overflow.
double clayton_logpdf(const Eigen::VectorXd& u, double theta);

// First and second derivative of the log density with respect to theta.
double clayton_dlogpdf(const Eigen::VectorXd& u, double theta);
double clayton_d2logpdf(const Eigen::VectorXd& u, double theta);

}  // namespace tsinfer
