#pragma once

#include <Eigen/Core>
#include <vector>

namespace tsinfer {

// AR(1)-GARCH(1,1) with standardized Student-t innovations.
// Natural parameter order: (phi0, phi1, beta0, beta1, beta2, nu) with
// |phi1| < 1, beta0 > 0, beta1 >= 0, beta2 >= 0, beta1 + beta2 < 1, nu > 2.
inline constexpr int kGarchParamCount = 6;

struct GarchParams {
  double phi0 = 0.0;
  double phi1 = 0.0;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double nu = 0.0;

  Eigen::VectorXd vector() const;
  static GarchParams from_vector(const Eigen::VectorXd& v);
  bool admissible() const;
};

struct GarchFit {
  GarchParams params;
  double loglik = 0.0;          // total conditional log-likelihood, i = 2..n
  Eigen::VectorXd sigma2;       // conditional variances, entries for i = 2..n
  Eigen::MatrixXd scores;       // (n-1) x 6 per-observation score at optimum
  Eigen::MatrixXd hessian_avg;  // 6 x 6 average second derivative at optimum
  bool boundary = false;        // beta1 + beta2 within 1e-4 of 1
  int iterations = 0;
  double grad_norm = 0.0;       // sup-norm of the average score at the optimum
};

// Per-observation conditional log-likelihoods (entries i = 2..n); the
// variance recursion is initialized at the sample variance of the demeaned
// series.  Returns -inf entries when params are inadmissible.
Eigen::VectorXd garch_loglik_path(const Eigen::VectorXd& y, const GarchParams& p);
double garch_loglik(const Eigen::VectorXd& y, const GarchParams& p);

// Conditional ML fit via quasi-Newton on an unconstrained reparameterization
// (log / logit / atanh), reported in natural parameters.  Per-observation
// scores and the average Hessian are computed by central differences with
// step 1e-5 (1 + |param|).  Throws NonConvergenceError; degenerate input
// (constant series) is rejected.
GarchFit ar_garch_fit(const Eigen::VectorXd& y);

// Probability integral transform of each observation (i = 2..n) through the
// fitted conditional distribution, clamped to [1e-10, 1 - 1e-10].
Eigen::VectorXd garch_pit(const Eigen::VectorXd& y, const GarchParams& p);

// Standardized Student-t (unit variance) distribution helpers.
double std_t_logpdf(double x, double nu);
double std_t_cdf(double x, double nu);
double std_t_quantile(double u, double nu);

}  // namespace tsinfer
