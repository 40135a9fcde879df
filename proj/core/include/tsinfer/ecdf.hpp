#pragma once

#include <Eigen/Core>
#include <vector>

namespace tsinfer {

// Empirical CDF of a sample; right-continuous step function.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> sample);  // EmptySampleError

  // Fraction of the sample <= t.
  double operator()(double t) const;

  // Lower empirical quantile: the ceil(alpha * m)-th order statistic,
  // alpha in (0, 1].
  double quantile(double alpha) const;

  const std::vector<double>& sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

EmpiricalCdf empirical_cdf(const Eigen::VectorXd& sample);

// Lower empirical quantile of an unsorted sample.
double quantile(const Eigen::VectorXd& sample, double alpha);

// L1 (order-1 Wasserstein) distance between the empirical distributions of
// two equal-size samples: the mean absolute difference of sorted order
// statistics.  Throws SizeMismatchError / EmptySampleError.
double wasserstein_l1(const Eigen::VectorXd& f, const Eigen::VectorXd& g);

}  // namespace tsinfer
