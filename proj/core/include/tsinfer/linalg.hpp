#pragma once

#include <Eigen/Core>

namespace tsinfer {

// Relative symmetry tolerance: max|M - M^T| <= kSymmetryTol * (1 + max|M|).
inline constexpr double kSymmetryTol = 1e-8;
// Pivots more negative than kPsdTol * norm(M) are rejected as not PSD;
// anything between that and zero is clipped to zero.
inline constexpr double kPsdTol = 1e-10;

// (M + M^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

// Square root L (with L L^T = M) of a symmetric positive semidefinite matrix,
// computed by pivoted LDL^T with tiny negative pivots clipped to zero.
// Throws NotSymmetricError / NotPsdError.
Eigen::MatrixXd cholesky_sqrt(const Eigen::MatrixXd& m);

// Symmetrize and clip negative eigenvalues to zero (PSD repair for
// covariance estimates assembled from noisy pieces).
Eigen::MatrixXd clip_to_psd(const Eigen::MatrixXd& m);

}  // namespace tsinfer
