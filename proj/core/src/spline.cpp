#include "tsinfer/spline.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "tsinfer/errors.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

CubicSplineBasis::CubicSplineBasis(std::vector<double> knots)
    : knots_(std::move(knots)) {
  if (knots_.size() < 2) {
    throw DomainError("spline: need at least two knots");
  }
  if (!std::is_sorted(knots_.begin(), knots_.end()) ||
      std::adjacent_find(knots_.begin(), knots_.end()) != knots_.end()) {
    throw DomainError("spline: knots must be strictly increasing");
  }
  augmented_.assign(3, knots_.front());
  augmented_.insert(augmented_.end(), knots_.begin(), knots_.end());
  augmented_.insert(augmented_.end(), 3, knots_.back());
  dim_ = static_cast<Eigen::Index>(knots_.size()) + 2;
}

Eigen::Index CubicSplineBasis::find_segment(double z) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
  auto idx = static_cast<Eigen::Index>(it - knots_.begin()) - 1;
  idx = std::clamp<Eigen::Index>(idx, 0, static_cast<Eigen::Index>(knots_.size()) - 2);
  return idx + 3;  // index into the augmented sequence
}

Eigen::RowVectorXd CubicSplineBasis::row(double z) const {
  return derivative_row(z, 0);
}

Eigen::RowVectorXd CubicSplineBasis::derivative_row(double z, int order) const {
  if (order < 0 || order > 2) {
    throw DomainError("spline: derivative order must be 0, 1 or 2");
  }
  z = std::clamp(z, lo(), hi());
  const Eigen::Index nfun = static_cast<Eigen::Index>(augmented_.size()) - 1;
  const Eigen::Index seg = find_segment(z);
  const auto& t = augmented_;

  // Cox-de Boor over all orders; conventions: 0/0 = 0.
  Eigen::VectorXd values = Eigen::VectorXd::Zero(nfun);
  values[seg] = 1.0;
  const int top_value_order = 4 - order;  // raise values this far, then differentiate
  for (int k = 2; k <= 4; ++k) {
    const Eigen::Index active = nfun - (k - 1);
    if (k <= top_value_order) {
      for (Eigen::Index i = 0; i < active; ++i) {
        const double den1 = t[i + k - 1] - t[i];
        const double den2 = t[i + k] - t[i + 1];
        const double a = den1 > 0.0 ? (z - t[i]) / den1 * values[i] : 0.0;
        const double b = den2 > 0.0 ? (t[i + k] - z) / den2 * values[i + 1] : 0.0;
        values[i] = a + b;
      }
    } else {
      for (Eigen::Index i = 0; i < active; ++i) {
        const double den1 = t[i + k - 1] - t[i];
        const double den2 = t[i + k] - t[i + 1];
        const double a = den1 > 0.0 ? values[i] / den1 : 0.0;
        const double b = den2 > 0.0 ? values[i + 1] / den2 : 0.0;
        values[i] = (k - 1) * (a - b);
      }
    }
  }
  return values.head(dim_).transpose();
}

Eigen::MatrixXd CubicSplineBasis::design(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd out(z.size(), dim_);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out.row(i) = row(z[i]);
  }
  return out;
}

FirstStageFit spline_gam_fit(const Eigen::VectorXd& z, const Eigen::VectorXd& d,
                             const std::vector<double>& knots,
                             SplineFitDiagnostics* diagnostics) {
  if (z.size() != d.size()) {
    throw SizeMismatchError("spline_gam_fit: z and d differ in length");
  }
  const CubicSplineBasis basis(knots);
  const Eigen::Index n = z.size();
  const Eigen::Index p = basis.size();
  if (n < p) {
    throw RankDeficientError("spline_gam_fit: fewer observations than basis functions");
  }
  const Eigen::MatrixXd design = basis.design(z);
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
    throw RankDeficientError("spline_gam_fit: singular basis design");
  }

  FirstStageFit fit;
  fit.gamma = llt.solve(design.transpose() * d);
  fit.coef = fit.gamma;
  fit.residuals = d - design * fit.gamma;
  const double dof = static_cast<double>(n - p);
  const double sigma2 = fit.residuals.squaredNorm() / dof;
  fit.cov_gamma = sigma2 * llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.cov_gamma = symmetrize(fit.cov_gamma);
  fit.chol_cov = cholesky_sqrt(fit.cov_gamma);

  auto counter = diagnostics != nullptr ? diagnostics->clamp_count : nullptr;
  const Eigen::VectorXd gamma = fit.gamma;
  fit.predict = [basis, gamma, counter](const Eigen::VectorXd& zrow) -> Eigen::VectorXd {
    double zv = zrow[0];
    if (zv < basis.lo() || zv > basis.hi()) {
      if (counter) {
        ++*counter;
      }
      zv = std::clamp(zv, basis.lo(), basis.hi());
    }
    Eigen::VectorXd out(1);
    out[0] = basis.row(zv).dot(gamma);
    return out;
  };
  return fit;
}

}  // namespace tsinfer
