#include "tsinfer/hac.hpp"

#include <cmath>
#include <numbers>

#include "tsinfer/errors.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

double hac_default_bandwidth(Eigen::Index n) {
  return 0.75 * std::cbrt(static_cast<double>(n));
}

double quadratic_spectral_kernel(double x) {
  if (x == 0.0) {
    return 1.0;
  }
  const double z = 6.0 * std::numbers::pi * x / 5.0;
  const double factor = 25.0 / (12.0 * std::numbers::pi * std::numbers::pi * x * x);
  return factor * (std::sin(z) / z - std::cos(z));
}

Eigen::MatrixXd hac_covariance(const Eigen::MatrixXd& scores, double bandwidth) {
  const Eigen::Index n = scores.rows();
  if (n == 0) {
    throw EmptySampleError("hac_covariance: no observations");
  }
  if (!(bandwidth > 0.0)) {
    throw DomainError("hac_covariance: bandwidth must be positive");
  }
  const Eigen::MatrixXd centered = scores.rowwise() - scores.colwise().mean();

  Eigen::MatrixXd total = centered.transpose() * centered / static_cast<double>(n);
  for (Eigen::Index j = 1; j < n; ++j) {
    const double x = static_cast<double>(j) / bandwidth;
    if (x > 2100.0) {
      break;  // kernel envelope below 1e-7 from here on
    }
    const double w = quadratic_spectral_kernel(x);
    if (std::abs(w) < 1e-7) {
      continue;
    }
    const Eigen::MatrixXd gamma =
        centered.bottomRows(n - j).transpose() * centered.topRows(n - j) /
        static_cast<double>(n);
    total += w * (gamma + gamma.transpose());
  }
  return clip_to_psd(total);
}

Eigen::MatrixXd hac_covariance(const Eigen::MatrixXd& scores) {
  return hac_covariance(scores, hac_default_bandwidth(scores.rows()));
}

}  // namespace tsinfer
