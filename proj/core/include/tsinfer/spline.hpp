#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "tsinfer/first_stage.hpp"

namespace tsinfer {

// Cubic B-spline basis on a strictly increasing knot sequence, clamped at the
// ends.  Spans the full space of C^2 piecewise-cubic functions with breaks at
// the interior knots; dimension = (#knots - 2) + 4.
class CubicSplineBasis {
 public:
  explicit CubicSplineBasis(std::vector<double> knots);

  Eigen::Index size() const { return dim_; }
  double lo() const { return knots_.front(); }
  double hi() const { return knots_.back(); }

  // Basis values at z; z outside [lo, hi] is clamped (the caller counts
  // clamps if it needs to report them).
  Eigen::RowVectorXd row(double z) const;
  // Derivative of given order (0, 1 or 2) of each basis function at z,
  // one-sided from the right except at the last knot.
  Eigen::RowVectorXd derivative_row(double z, int order) const;

  Eigen::MatrixXd design(const Eigen::VectorXd& z) const;

 private:
  std::vector<double> knots_;      // original breakpoints
  std::vector<double> augmented_;  // with 3 repeats at each end
  Eigen::Index dim_ = 0;

  Eigen::Index find_segment(double z) const;
};

// First-stage fit counting how often predictions clamped the input.
struct SplineFitDiagnostics {
  std::shared_ptr<long> clamp_count = std::make_shared<long>(0);
};

// Least-squares fit of d on the spline basis of z, with the standard
// homoskedastic OLS coefficient covariance.  predict(z-row) clamps z into the
// knot span and counts the clamps.
FirstStageFit spline_gam_fit(const Eigen::VectorXd& z, const Eigen::VectorXd& d,
                             const std::vector<double>& knots,
                             SplineFitDiagnostics* diagnostics = nullptr);

}  // namespace tsinfer
