#include "tsinfer/clayton.hpp"

#include <algorithm>
#include <cmath>

#include "tsinfer/errors.hpp"

namespace tsinfer {

namespace {

struct ClaytonTerms {
  double sum_log_u = 0.0;  // sum_p log u_p
  double log_s = 0.0;      // log S
  double t1 = 0.0;         // sum_p u_p^{-theta} log u_p / S
  double t2 = 0.0;         // sum_p u_p^{-theta} (log u_p)^2 / S
  int k = 0;
};

ClaytonTerms clayton_terms(const Eigen::VectorXd& u, double theta) {
  if (u.size() < 2) {
    throw DomainError("clayton: need at least two margins");
  }
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw DomainError("clayton: theta must be positive and finite");
  }
  ClaytonTerms terms;
  terms.k = static_cast<int>(u.size());

  // a_p = -theta log u_p >= 0; factor exp(max a_p) out of every ratio.
  Eigen::VectorXd log_u(u.size());
  Eigen::VectorXd a(u.size());
  double a_max = 0.0;
  for (Eigen::Index p = 0; p < u.size(); ++p) {
    const double up = std::clamp(u[p], kUClamp, 1.0 - kUClamp);
    log_u[p] = std::log(up);
    a[p] = -theta * log_u[p];
    a_max = std::max(a_max, a[p]);
  }
  terms.sum_log_u = log_u.sum();

  double inner = -(static_cast<double>(terms.k) - 1.0) * std::exp(-a_max);
  double num1 = 0.0;
  double num2 = 0.0;
  for (Eigen::Index p = 0; p < u.size(); ++p) {
    const double e = std::exp(a[p] - a_max);
    inner += e;
    num1 += e * log_u[p];
    num2 += e * log_u[p] * log_u[p];
  }
  terms.log_s = a_max + std::log(inner);
  terms.t1 = num1 / inner;
  terms.t2 = num2 / inner;
  return terms;
}

}  // namespace

double clayton_logpdf(const Eigen::VectorXd& u, double theta) {
  const ClaytonTerms terms = clayton_terms(u, theta);
  double value = 0.0;
  for (int p = 1; p < terms.k; ++p) {
    value += std::log(p * theta + 1.0);
  }
  value -= (theta + 1.0) * terms.sum_log_u;
  value -= (terms.k + 1.0 / theta) * terms.log_s;
  return value;
}

double clayton_dlogpdf(const Eigen::VectorXd& u, double theta) {
  const ClaytonTerms terms = clayton_terms(u, theta);
  double value = 0.0;
  for (int p = 1; p < terms.k; ++p) {
    value += p / (p * theta + 1.0);
  }
  value -= terms.sum_log_u;
  value += terms.log_s / (theta * theta);
  value += (terms.k + 1.0 / theta) * terms.t1;
  return value;
}

double clayton_d2logpdf(const Eigen::VectorXd& u, double theta) {
  const ClaytonTerms terms = clayton_terms(u, theta);
  const double k_inv = terms.k + 1.0 / theta;
  double value = k_inv * terms.t1 * terms.t1 - k_inv * terms.t2;
  for (int p = 1; p < terms.k; ++p) {
    const double r = p / (p * theta + 1.0);
    value -= r * r;
  }
  value -= 2.0 * terms.t1 / (theta * theta);
  value -= 2.0 * terms.log_s / (theta * theta * theta);
  return value;
}

}  // namespace tsinfer
