#include "tsinfer/ecdf.hpp"

#include <algorithm>
#include <cmath>

#include "tsinfer/errors.hpp"

namespace tsinfer {

EmpiricalCdf::EmpiricalCdf(std::vector<double> sample) : sorted_(std::move(sample)) {
  if (sorted_.empty()) {
    throw EmptySampleError("empirical_cdf: sample is empty");
  }
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double t) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double EmpiricalCdf::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw LevelMismatchError("quantile: alpha must be in (0, 1]");
  }
  const auto m = static_cast<std::ptrdiff_t>(sorted_.size());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(alpha * static_cast<double>(m)));
  rank = std::clamp<std::ptrdiff_t>(rank, 1, m);
  return sorted_[static_cast<std::size_t>(rank - 1)];
}

EmpiricalCdf empirical_cdf(const Eigen::VectorXd& sample) {
  return EmpiricalCdf(std::vector<double>(sample.begin(), sample.end()));
}

double quantile(const Eigen::VectorXd& sample, double alpha) {
  return empirical_cdf(sample).quantile(alpha);
}

double wasserstein_l1(const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
  if (f.size() != g.size()) {
    throw SizeMismatchError("wasserstein_l1: samples must have equal size");
  }
  if (f.size() == 0) {
    throw EmptySampleError("wasserstein_l1: samples are empty");
  }
  std::vector<double> fs(f.begin(), f.end());
  std::vector<double> gs(g.begin(), g.end());
  std::sort(fs.begin(), fs.end());
  std::sort(gs.begin(), gs.end());
  double total = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    total += std::abs(fs[i] - gs[i]);
  }
  return total / static_cast<double>(fs.size());
}

}  // namespace tsinfer
