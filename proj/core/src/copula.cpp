#include "tsinfer/copula.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tsinfer/clayton.hpp"
#include "tsinfer/errors.hpp"
#include "tsinfer/hac.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

namespace {

// Invert a symmetric block by eigendecomposition, flooring small |eigenvalue|
// so near-boundary fits (nearly singular curvature) still yield a finite
// inverse instead of blowing up the parameter covariance.
Eigen::MatrixXd pinv_with_floor(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  const double floor = 1e-10 * scale;
  Eigen::VectorXd inv_ev(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double lambda = std::abs(ev[i]) < floor ? floor : ev[i];
    inv_ev[i] = 1.0 / lambda;
  }
  return es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
}

// Pull series p's parameter block out of a stacked coefficient vector.
GarchParams block_params(const Eigen::VectorXd& beta, int p) {
  return GarchParams::from_vector(beta.segment(p * kGarchParamCount,
                                               kGarchParamCount));
}

// Force a rejected redraw into the admissible region, keeping it as close to
// the raw draw as the constraints allow.
GarchParams clamp_admissible(GarchParams p) {
  constexpr double kMargin = 1e-6;
  p.phi1 = std::clamp(p.phi1, -1.0 + kMargin, 1.0 - kMargin);
  p.beta0 = std::max(p.beta0, 1e-12);
  p.beta1 = std::max(p.beta1, 0.0);
  p.beta2 = std::max(p.beta2, 0.0);
  const double persistence = p.beta1 + p.beta2;
  if (persistence >= 1.0 - kMargin) {
    const double shrink = (1.0 - kMargin) / persistence;
    p.beta1 *= shrink;
    p.beta2 *= shrink;
  }
  p.nu = std::max(p.nu, 2.0 + kMargin);
  return p;
}

// PIT panels for redrawn coefficients, keyed by (derived stream, draw index)
// so repricing the influence parts at another theta reuses the expensive
// volatility refiltering instead of redoing it.
struct PitCache {
  std::mutex mutex;
  std::map<std::pair<std::uint64_t, std::uint32_t>, Eigen::MatrixXd> panels;
};

Eigen::MatrixXd redraw_pit(const GarchBundle& bundle, const StreamKey& key,
                           std::uint32_t substream, RedrawStats* stats) {
  const int k = static_cast<int>(bundle.fits.size());
  const Eigen::Index dim = bundle.beta.size();
  RngStream stream(key, substream);

  std::vector<GarchParams> params(static_cast<std::size_t>(k));
  bool accepted = false;
  Eigen::VectorXd beta_bar(dim);
  for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
    beta_bar = bundle.beta + bundle.chol_cov * stream.normal_vector(dim);
    accepted = true;
    for (int p = 0; p < k; ++p) {
      params[static_cast<std::size_t>(p)] = block_params(beta_bar, p);
      if (!params[static_cast<std::size_t>(p)].admissible()) {
        accepted = false;
        break;
      }
    }
  }
  if (stats != nullptr) {
    ++stats->total;
    if (!accepted) ++stats->clamped;
  }
  if (!accepted) {
    for (int p = 0; p < k; ++p) {
      params[static_cast<std::size_t>(p)] =
          clamp_admissible(block_params(beta_bar, p));
    }
  }

  Eigen::MatrixXd u(bundle.y.rows() - 1, k);
  for (int p = 0; p < k; ++p) {
    u.col(p) = garch_pit(bundle.y.col(p), params[static_cast<std::size_t>(p)]);
  }
  return u;
}

double copula_score_sum(const Eigen::MatrixXd& u, double theta) {
  double sum = 0.0;
  Eigen::VectorXd row(u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    row = u.row(i).transpose();
    sum += clayton_dlogpdf(row, theta);
  }
  return sum;
}

double copula_curvature_sum(const Eigen::MatrixXd& u, double theta) {
  double sum = 0.0;
  Eigen::VectorXd row(u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    row = u.row(i).transpose();
    sum += clayton_d2logpdf(row, theta);
  }
  return sum;
}

InfluenceParts make_copula_parts(std::shared_ptr<const GarchBundle> bundle,
                                 std::shared_ptr<PitCache> cache,
                                 std::shared_ptr<RedrawStats> stats,
                                 double theta, const Eigen::MatrixXd& pit,
                                 double n_eff) {
  InfluenceParts parts;
  parts.dim = 1;
  parts.hessian = Eigen::MatrixXd::Constant(
      1, 1, -copula_curvature_sum(pit, theta) / n_eff);
  parts.cond_variance = Eigen::MatrixXd::Zero(1, 1);
  parts.cond_variance_available = false;
  parts.e_draw = [bundle = std::move(bundle), cache = std::move(cache),
                  stats = std::move(stats), theta,
                  n_eff](const StreamKey& key, std::uint32_t s) {
    const std::pair<std::uint64_t, std::uint32_t> id{key.stream, s};
    Eigen::MatrixXd u;
    {
      std::lock_guard<std::mutex> lock(cache->mutex);
      auto it = cache->panels.find(id);
      if (it != cache->panels.end()) u = it->second;
    }
    if (u.size() == 0) {
      u = redraw_pit(*bundle, key, s, stats.get());
      std::lock_guard<std::mutex> lock(cache->mutex);
      cache->panels.emplace(id, u);
    }
    return Eigen::VectorXd::Constant(
        1, copula_score_sum(u, theta) / std::sqrt(n_eff));
  };
  return parts;
}

}  // namespace

GarchBundle garch_bundle_fit(const Eigen::MatrixXd& y) {
  if (y.cols() < 2) {
    throw SizeMismatchError("garch_bundle_fit: need at least two series, got " +
                            std::to_string(y.cols()));
  }
  GarchBundle bundle;
  bundle.y = y;
  const int k = static_cast<int>(y.cols());
  const Eigen::Index n_eff = y.rows() - 1;
  bundle.n_eff = static_cast<double>(n_eff);
  bundle.fits.reserve(static_cast<std::size_t>(k));
  bundle.beta.resize(k * kGarchParamCount);
  bundle.pit.resize(n_eff, k);

  Eigen::MatrixXd curvature =
      Eigen::MatrixXd::Zero(k * kGarchParamCount, k * kGarchParamCount);
  Eigen::MatrixXd scores(n_eff, k * kGarchParamCount);
  for (int p = 0; p < k; ++p) {
    GarchFit fit = ar_garch_fit(y.col(p));
    bundle.beta.segment(p * kGarchParamCount, kGarchParamCount) =
        fit.params.vector();
    bundle.pit.col(p) = garch_pit(y.col(p), fit.params);
    curvature.block(p * kGarchParamCount, p * kGarchParamCount,
                    kGarchParamCount, kGarchParamCount) = fit.hessian_avg;
    scores.middleCols(p * kGarchParamCount, kGarchParamCount) = fit.scores;
    bundle.fits.push_back(std::move(fit));
  }

  // Sandwich covariance: block-diagonal curvature bread, long-run score
  // covariance meat (the stacked scores are serially dependent).
  Eigen::MatrixXd bread =
      Eigen::MatrixXd::Zero(k * kGarchParamCount, k * kGarchParamCount);
  for (int p = 0; p < k; ++p) {
    bread.block(p * kGarchParamCount, p * kGarchParamCount, kGarchParamCount,
                kGarchParamCount) =
        pinv_with_floor(curvature.block(p * kGarchParamCount,
                                        p * kGarchParamCount, kGarchParamCount,
                                        kGarchParamCount));
  }
  const Eigen::MatrixXd meat = hac_covariance(scores);
  bundle.cov_beta =
      symmetrize(bread * meat * bread.transpose()) / bundle.n_eff;
  try {
    bundle.chol_cov = cholesky_sqrt(bundle.cov_beta);
  } catch (const NotPsdError&) {
    bundle.cov_beta = clip_to_psd(bundle.cov_beta);
    bundle.chol_cov = cholesky_sqrt(bundle.cov_beta);
  }
  return bundle;
}

CopulaEstimate copula_estimate(const Eigen::MatrixXd& u,
                               const GarchBundle& fs) {
  if (u.cols() != fs.y.cols()) {
    throw SizeMismatchError(
        "copula_estimate: PIT panel has " + std::to_string(u.cols()) +
        " series but the first stage fitted " + std::to_string(fs.y.cols()));
  }

  // Maximize the pseudo-likelihood by safeguarded Newton on the score,
  // falling back to bisection when a Newton step leaves the bracket.
  double lo = 1e-3;
  double hi = 50.0;
  double score_lo = copula_score_sum(u, lo);
  double score_hi = copula_score_sum(u, hi);
  if (score_lo < 0.0 || score_hi > 0.0) {
    throw NonConvergenceError(
        "copula_estimate: score does not change sign on (0.001, 50); no "
        "interior maximum");
  }
  double theta = std::min(std::max(2.0, lo), hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double score = copula_score_sum(u, theta);
    if (score > 0.0) {
      lo = theta;
    } else {
      hi = theta;
    }
    const double curvature = copula_curvature_sum(u, theta);
    double next = theta - score / curvature;
    if (!(curvature < 0.0) || !(next > lo) || !(next < hi)) {
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - theta) < 1e-11 * (1.0 + std::abs(theta))) {
      theta = next;
      break;
    }
    theta = next;
  }

  CopulaEstimate est;
  est.theta = theta;
  est.n_eff = fs.n_eff;
  est.stats = std::make_shared<RedrawStats>();
  est.bundle_ = std::make_shared<GarchBundle>(fs);
  auto cache = std::make_shared<PitCache>();
  est.cache_ = cache;
  est.parts = make_copula_parts(est.bundle_, cache, est.stats, theta, u,
                                fs.n_eff);
  return est;
}

CopulaEstimate copula_estimate(const GarchBundle& fs) {
  return copula_estimate(fs.pit, fs);
}

InfluenceParts CopulaEstimate::parts_at(double theta_alt) const {
  auto bundle = std::static_pointer_cast<const GarchBundle>(bundle_);
  auto cache = std::static_pointer_cast<PitCache>(cache_);
  return make_copula_parts(bundle, cache, stats, theta_alt, bundle->pit,
                           n_eff);
}

}  // namespace tsinfer
