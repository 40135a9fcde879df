#pragma once

#include <Eigen/Core>

namespace tsinfer {

// Default bandwidth (3/4) n^{1/3} for the quadratic spectral kernel.
double hac_default_bandwidth(Eigen::Index n);

// Quadratic spectral kernel value at x (k(0) = 1).
double quadratic_spectral_kernel(double x);

// Long-run covariance of the row sequence of `scores` (n x p), demeaned,
// normalized by n: Gamma_0 + sum_j w_j (Gamma_j + Gamma_j'), with quadratic
// spectral weights w_j = k(j / bandwidth).  Lags whose weight envelope falls
// below 1e-7 are dropped.  The result is symmetrized and eigenvalue-clipped
// to be positive semidefinite.
Eigen::MatrixXd hac_covariance(const Eigen::MatrixXd& scores, double bandwidth);
Eigen::MatrixXd hac_covariance(const Eigen::MatrixXd& scores);

}  // namespace tsinfer
