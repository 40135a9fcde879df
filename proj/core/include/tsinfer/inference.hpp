#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

#include "tsinfer/rng.hpp"

namespace tsinfer {

// Draw index -> simulated value of the estimated non-normal influence part.
// The draw must be a pure function of (key, draw index) so it can be
// replayed, e.g. when the correction term is re-evaluated at a shifted
// parameter value.
using EDraw = std::function<Eigen::VectorXd(const StreamKey&, std::uint32_t)>;

// Estimated pieces of the influence-function decomposition of a two-stage
// extremum estimator: hessian (positive definite curvature of the sample
// objective), cond_variance (covariance of the conditionally normal part;
// may be exactly zero, or flagged unavailable when no consistent estimate
// exists), and e_draw (simulator for the remaining, data-dependent part).
struct InfluenceParts {
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd cond_variance;
  EDraw e_draw;
  Eigen::Index dim = 0;
  bool cond_variance_available = true;
};

// kappa simulated draws psi_s = hessian^{-1} (cond_variance^{1/2} zeta_s +
// e_s), approximating the law of sqrt(n) (theta_hat - theta0).
struct PsiSample {
  Eigen::MatrixXd draws;    // kappa x dim
  Eigen::MatrixXd e_draws;  // kappa x dim, the raw e_s
  double n = 0;             // sample size behind the sqrt(n) scaling
};

// Simulate the psi sample.  The normal innovations and the e-part draws use
// disjoint sub-streams derived from `rng`; draw s depends only on (rng, s).
// Throws SingularHessianError if the hessian is numerically singular.
PsiSample simulate_psi(const InfluenceParts& parts, double n, int kappa,
                       const StreamKey& rng);

// Per-coordinate two-sided confidence interval at the given level, from the
// empirical quantiles of {theta_hat_k - psi_{s,k} / sqrt(n)}.
// Column 0 = lower bound, column 1 = upper bound.
Eigen::MatrixXd confidence_interval(const Eigen::VectorXd& theta_hat,
                                    const PsiSample& psi, double level);

// Plug-in variance estimate of theta_hat:
//   hessian^{-1} (cond_variance + SampleCov(e_draws)) hessian^{-1} / n.
Eigen::MatrixXd asymptotic_variance(const InfluenceParts& parts,
                                    const PsiSample& psi, double n);

enum class DebiasMode { kOff, kMean, kMedian };

// Location summary of the e-draws used by the bias correction: column mean,
// or coordinate-wise lower median in median mode.
Eigen::VectorXd e_location(const Eigen::MatrixXd& e_draws, DebiasMode mode);

// Bias-corrected estimate theta_star = theta_hat - hessian^{-1} omega /
// sqrt(n), where omega summarizes the e-draws per `mode`.
Eigen::VectorXd debias(const Eigen::VectorXd& theta_hat,
                       const InfluenceParts& parts, const PsiSample& psi,
                       double n, DebiasMode mode);

// Psi sample for the bias-corrected estimate: the e-part is recentred by its
// own location summary, so in mean mode the e-contribution averages to zero
// exactly.  `parts_star` must be built at theta_star.
PsiSample debiased_psi(const InfluenceParts& parts_star, double n, int kappa,
                       const StreamKey& rng, DebiasMode mode = DebiasMode::kMean);

}  // namespace tsinfer
