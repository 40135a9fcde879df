#include "tsinfer/garch.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tsinfer/errors.hpp"

namespace tsinfer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPitClamp = 1e-10;

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Unconstrained coordinates: (phi0, atanh(phi1), log beta0,
// logit(beta1+beta2), logit(beta1/(beta1+beta2)), log(nu-2)).
Eigen::VectorXd to_unconstrained(const GarchParams& p) {
  Eigen::VectorXd t(kGarchParamCount);
  t[0] = p.phi0;
  t[1] = std::atanh(p.phi1);
  t[2] = std::log(p.beta0);
  const double persist = p.beta1 + p.beta2;
  t[3] = logit(persist);
  t[4] = logit(p.beta1 / persist);
  t[5] = std::log(p.nu - 2.0);
  return t;
}

GarchParams from_unconstrained(const Eigen::VectorXd& t) {
  GarchParams p;
  p.phi0 = t[0];
  p.phi1 = std::tanh(t[1]);
  p.beta0 = std::exp(std::min(t[2], 40.0));
  const double persist = sigmoid(t[3]);
  const double share = sigmoid(t[4]);
  p.beta1 = persist * share;
  p.beta2 = persist * (1.0 - share);
  p.nu = 2.0 + std::exp(std::min(t[5], 12.0));
  return p;
}

double sample_variance(const Eigen::VectorXd& y) {
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

}  // namespace

Eigen::VectorXd GarchParams::vector() const {
  Eigen::VectorXd v(kGarchParamCount);
  v << phi0, phi1, beta0, beta1, beta2, nu;
  return v;
}

GarchParams GarchParams::from_vector(const Eigen::VectorXd& v) {
  GarchParams p;
  p.phi0 = v[0];
  p.phi1 = v[1];
  p.beta0 = v[2];
  p.beta1 = v[3];
  p.beta2 = v[4];
  p.nu = v[5];
  return p;
}

bool GarchParams::admissible() const {
  return std::abs(phi1) < 1.0 && beta0 > 0.0 && beta1 >= 0.0 && beta2 >= 0.0 &&
         beta1 + beta2 < 1.0 && nu > 2.0;
}

double std_t_logpdf(double x, double nu) {
  const double scale = nu - 2.0;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(std::numbers::pi * scale) -
         0.5 * (nu + 1.0) * std::log1p(x * x / scale);
}

double std_t_cdf(double x, double nu) {
  const boost::math::students_t dist(nu);
  return boost::math::cdf(dist, x * std::sqrt(nu / (nu - 2.0)));
}

double std_t_quantile(double u, double nu) {
  const boost::math::students_t dist(nu);
  return boost::math::quantile(dist, u) * std::sqrt((nu - 2.0) / nu);
}

Eigen::VectorXd garch_loglik_path(const Eigen::VectorXd& y, const GarchParams& p) {
  const Eigen::Index n = y.size();
  if (n < 3) {
    throw EmptySampleError("garch: series too short");
  }
  Eigen::VectorXd path(n - 1);
  if (!p.admissible()) {
    path.setConstant(-kInf);
    return path;
  }
  // Constant terms of the standardized-t log-density.
  const double logc = std::lgamma(0.5 * (p.nu + 1.0)) - std::lgamma(0.5 * p.nu) -
                      0.5 * std::log(std::numbers::pi * (p.nu - 2.0));
  const double expo = 0.5 * (p.nu + 1.0);
  const double scale = p.nu - 2.0;

  double sigma2 = sample_variance(y);
  double prev_resid = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (i >= 2) {
      sigma2 = p.beta0 + p.beta1 * prev_resid * prev_resid + p.beta2 * sigma2;
    }
    sigma2 = std::max(sigma2, 1e-300);
    const double resid = y[i] - p.phi0 - p.phi1 * y[i - 1];
    const double x2 = resid * resid / sigma2;
    path[i - 1] = logc - 0.5 * std::log(sigma2) - expo * std::log1p(x2 / scale);
    prev_resid = resid;
  }
  return path;
}

double garch_loglik(const Eigen::VectorXd& y, const GarchParams& p) {
  return garch_loglik_path(y, p).sum();
}

Eigen::VectorXd garch_pit(const Eigen::VectorXd& y, const GarchParams& p) {
  const Eigen::Index n = y.size();
  if (!p.admissible()) {
    throw DomainError("garch_pit: parameters outside the admissible set");
  }
  Eigen::VectorXd u(n - 1);
  double sigma2 = sample_variance(y);
  double prev_resid = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (i >= 2) {
      sigma2 = p.beta0 + p.beta1 * prev_resid * prev_resid + p.beta2 * sigma2;
    }
    sigma2 = std::max(sigma2, 1e-300);
    const double resid = y[i] - p.phi0 - p.phi1 * y[i - 1];
    const double val = std_t_cdf(resid / std::sqrt(sigma2), p.nu);
    u[i - 1] = std::clamp(val, kPitClamp, 1.0 - kPitClamp);
    prev_resid = resid;
  }
  return u;
}

namespace {

// Average negative log-likelihood in unconstrained coordinates.
struct Objective {
  const Eigen::VectorXd& y;
  double n_eff;

  double operator()(const Eigen::VectorXd& t) const {
    const GarchParams p = from_unconstrained(t);
    const double ll = garch_loglik(y, p);
    if (!std::isfinite(ll)) {
      return kInf;
    }
    return -ll / n_eff;
  }
};

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& t,
                                 double f0) {
  Eigen::VectorXd g(t.size());
  Eigen::VectorXd tp = t;
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    const double h = 1e-5 * (1.0 + std::abs(t[j]));
    tp[j] = t[j] + h;
    const double fp = f(tp);
    tp[j] = t[j] - h;
    const double fm = f(tp);
    tp[j] = t[j];
    if (std::isfinite(fp) && std::isfinite(fm)) {
      g[j] = (fp - fm) / (2.0 * h);
    } else if (std::isfinite(fp)) {
      g[j] = (fp - f0) / h;
    } else if (std::isfinite(fm)) {
      g[j] = (f0 - fm) / h;
    } else {
      g[j] = 0.0;
    }
  }
  return g;
}

}  // namespace

GarchFit ar_garch_fit(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  if (n < 20) {
    throw EmptySampleError("ar_garch_fit: series too short");
  }
  const double var_y = sample_variance(y);
  if (!(var_y > 1e-12)) {
    throw NonConvergenceError("ar_garch_fit: series is (numerically) constant");
  }
  const double n_eff = static_cast<double>(n - 1);

  // Standard starting point: weak AR, canonical GARCH(0.1, 0.8), nu = 8.
  GarchParams start;
  start.phi0 = 0.0;
  start.phi1 = 0.1;
  start.beta0 = 0.1 * var_y;
  start.beta1 = 0.1;
  start.beta2 = 0.8;
  start.nu = 8.0;

  const Objective f{y, n_eff};
  Eigen::VectorXd t = to_unconstrained(start);
  double fval = f(t);
  if (!std::isfinite(fval)) {
    throw NonConvergenceError("ar_garch_fit: invalid starting value");
  }
  Eigen::VectorXd grad = numeric_gradient(f, t, fval);

  const int max_iter = 500;
  const double tol = 1e-7;
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(kGarchParamCount, kGarchParamCount);
  int iter = 0;
  bool line_search_stuck = false;
  for (; iter < max_iter; ++iter) {
    if (grad.cwiseAbs().maxCoeff() < tol) {
      break;
    }
    Eigen::VectorXd direction = -hinv * grad;
    if (direction.dot(grad) >= 0.0) {
      hinv.setIdentity();
      direction = -grad;
    }
    double step = 1.0;
    double fnew = kInf;
    Eigen::VectorXd tnew;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      tnew = t + step * direction;
      fnew = f(tnew);
      if (std::isfinite(fnew) &&
          fnew <= fval + 1e-4 * step * direction.dot(grad)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      line_search_stuck = true;
      break;
    }
    const Eigen::VectorXd gnew = numeric_gradient(f, tnew, fnew);
    const Eigen::VectorXd s = tnew - t;
    const Eigen::VectorXd dg = gnew - grad;
    const double sy = s.dot(dg);
    if (sy > 1e-12) {
      if (iter == 0) {
        hinv *= sy / dg.squaredNorm();
      }
      const Eigen::VectorXd hy = hinv * dg;
      const double yhy = dg.dot(hy);
      hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
              (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    t = tnew;
    fval = fnew;
    grad = gnew;
  }

  const double grad_sup = grad.cwiseAbs().maxCoeff();
  if (grad_sup > 1e-3) {
    throw NonConvergenceError(
        "ar_garch_fit: optimizer stalled, sup-norm of gradient = " +
        std::to_string(grad_sup) +
        (line_search_stuck ? " (line search exhausted)" : " (iteration cap)"));
  }

  GarchFit fit;
  fit.params = from_unconstrained(t);
  fit.iterations = iter;
  fit.boundary = fit.params.beta1 + fit.params.beta2 > 1.0 - 1e-4;

  // Per-observation scores and average Hessian in natural parameters.
  const Eigen::VectorXd theta = fit.params.vector();
  auto path_at = [&y](const Eigen::VectorXd& v) {
    return garch_loglik_path(y, GarchParams::from_vector(v));
  };
  // Central differences, falling back to one-sided steps when a perturbation
  // leaves the admissible parameter set (fits that land near a constraint).
  const Eigen::VectorXd base_path = path_at(theta);
  auto path_diff = [&](const Eigen::VectorXd& v, Eigen::Index j) {
    Eigen::VectorXd w = v;
    const double h = 1e-5 * (1.0 + std::abs(v[j]));
    w[j] = v[j] + h;
    Eigen::VectorXd plus = path_at(w);
    w[j] = v[j] - h;
    Eigen::VectorXd minus = path_at(w);
    const bool ok_plus = std::isfinite(plus.sum());
    const bool ok_minus = std::isfinite(minus.sum());
    if (ok_plus && ok_minus) {
      return Eigen::VectorXd((plus - minus) / (2.0 * h));
    }
    const Eigen::VectorXd base = (v - theta).cwiseAbs().maxCoeff() == 0.0
                                     ? base_path
                                     : path_at(v);
    if (ok_plus) {
      return Eigen::VectorXd((plus - base) / h);
    }
    if (ok_minus) {
      return Eigen::VectorXd((base - minus) / h);
    }
    return Eigen::VectorXd(Eigen::VectorXd::Zero(base.size()));
  };

  fit.scores.resize(n - 1, kGarchParamCount);
  for (int j = 0; j < kGarchParamCount; ++j) {
    fit.scores.col(j) = path_diff(theta, j);
  }
  fit.grad_norm = (fit.scores.colwise().sum() / n_eff).cwiseAbs().maxCoeff();

  // Average Hessian by central differences of the average score.
  fit.hessian_avg.resize(kGarchParamCount, kGarchParamCount);
  auto avg_score = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd g(kGarchParamCount);
    for (int j = 0; j < kGarchParamCount; ++j) {
      g[j] = path_diff(v, j).sum();
    }
    return g;
  };
  Eigen::VectorXd vp = theta;
  for (int j = 0; j < kGarchParamCount; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(theta[j]));
    vp[j] = theta[j] + h;
    Eigen::VectorXd gp = avg_score(vp);
    bool ok_p = std::isfinite(gp.sum()) &&
                std::isfinite(path_at(vp).sum());
    vp[j] = theta[j] - h;
    Eigen::VectorXd gm = avg_score(vp);
    bool ok_m = std::isfinite(gm.sum()) &&
                std::isfinite(path_at(vp).sum());
    vp[j] = theta[j];
    if (ok_p && ok_m) {
      fit.hessian_avg.col(j) = (gp - gm) / (2.0 * h * n_eff);
    } else {
      const Eigen::VectorXd g0 = avg_score(theta);
      if (ok_p) {
        fit.hessian_avg.col(j) = (gp - g0) / (h * n_eff);
      } else if (ok_m) {
        fit.hessian_avg.col(j) = (g0 - gm) / (h * n_eff);
      } else {
        fit.hessian_avg.col(j).setZero();
      }
    }
  }
  fit.hessian_avg = 0.5 * (fit.hessian_avg + fit.hessian_avg.transpose());

  const GarchParams p = fit.params;
  Eigen::VectorXd path = garch_loglik_path(y, p);
  fit.loglik = path.sum();
  fit.sigma2.resize(n - 1);
  double sigma2 = sample_variance(y);
  double prev_resid = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (i >= 2) {
      sigma2 = p.beta0 + p.beta1 * prev_resid * prev_resid + p.beta2 * sigma2;
    }
    fit.sigma2[i - 1] = sigma2;
    prev_resid = y[i] - p.phi0 - p.phi1 * y[i - 1];
  }
  return fit;
}

}  // namespace tsinfer
