#include "tsinfer/second_stage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "tsinfer/errors.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

namespace {

constexpr double kWeakDesignTol = 1e-8;
constexpr double kExponentCap = 50.0;
constexpr double kProbFloor = 1e-10;

// Everything the instrumental-variables correction term needs per draw,
// reduced to instrument-space Gram matrices so a draw costs O(k^2) instead
// of O(n k).
struct IvState {
  Eigen::MatrixXd a_zz;  // Z'Z
  Eigen::MatrixXd a_zx;  // Z'X_exog
  Eigen::MatrixXd a_xx;  // X_exog'X_exog
  Eigen::VectorXd gamma;
  Eigen::MatrixXd chol_cov;
  Eigen::Index k = 0;    // instrument count
  Eigen::Index m_d = 0;  // endogenous columns
  Eigen::Index m_x = 0;  // exogenous columns
  double n = 0.0;
};

// Score of the least-squares objective at theta under first-stage
// coefficients gamma_bar, in Gram form: (2/n) Xbar'(ybar - Xbar theta)
// before the 1/n, i.e. this returns Xbar'(ybar - Xbar theta).
Eigen::VectorXd iv_score_gram(const IvState& st, const Eigen::VectorXd& gbar,
                              const Eigen::VectorXd& theta) {
  const Eigen::Map<const Eigen::MatrixXd> coef(gbar.data(), st.k, 1 + st.m_d);
  const auto gamma_y = coef.col(0);
  const auto gamma_d = coef.rightCols(st.m_d);
  const Eigen::VectorXd theta_d = theta.head(st.m_d);
  const Eigen::VectorXd theta_x = theta.tail(st.m_x);

  // ybar - Xbar theta = Z (gamma_y - gamma_d theta_d) - X_exog theta_x.
  const Eigen::VectorXd u = gamma_y - gamma_d * theta_d;
  const Eigen::VectorXd zz_u = st.a_zz * u;
  Eigen::VectorXd score(st.m_d + st.m_x);
  if (st.m_x > 0) {
    const Eigen::VectorXd zx_tx = st.a_zx * theta_x;
    score.head(st.m_d) = gamma_d.transpose() * (zz_u - zx_tx);
    score.tail(st.m_x) =
        st.a_zx.transpose() * u - st.a_xx * theta_x;
  } else {
    score.head(st.m_d) = gamma_d.transpose() * zz_u;
  }
  return score;
}

InfluenceParts make_iv_parts(std::shared_ptr<const IvState> state,
                             const Eigen::MatrixXd& hessian,
                             Eigen::VectorXd theta) {
  InfluenceParts parts;
  parts.dim = hessian.rows();
  parts.hessian = hessian;
  parts.cond_variance = Eigen::MatrixXd::Zero(parts.dim, parts.dim);
  parts.cond_variance_available = true;
  parts.e_draw = [state = std::move(state), theta = std::move(theta)](
                     const StreamKey& key, std::uint32_t s) -> Eigen::VectorXd {
    RngStream stream(key, s);
    const Eigen::VectorXd gbar =
        state->gamma + state->chol_cov * stream.normal_vector(
                                             state->gamma.size());
    return (2.0 / std::sqrt(state->n)) * iv_score_gram(*state, gbar, theta);
  };
  return parts;
}

// State behind the Poisson correction term: the basis design of the stage-two
// observations plus the first-stage coefficient distribution.
struct PoissonState {
  Eigen::MatrixXd design;  // n x p basis rows
  Eigen::VectorXd p_hat;   // clamped fitted regressor at gamma
  Eigen::VectorXd gamma;
  Eigen::MatrixXd chol_cov;
  std::shared_ptr<long> clamp_count;
  double n = 0.0;
};

double capped_exp(double x) { return std::exp(std::min(x, kExponentCap)); }

// Curvature (equals the conditional variance by the information equality)
// of the Poisson pseudo-likelihood at theta.
Eigen::MatrixXd poisson_curvature(const PoissonState& st,
                                  const Eigen::VectorXd& theta) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  for (Eigen::Index i = 0; i < st.p_hat.size(); ++i) {
    const double p = st.p_hat[i];
    const double lambda = capped_exp(theta[0] + theta[1] * p);
    a(0, 0) += lambda;
    a(0, 1) += lambda * p;
    a(1, 1) += lambda * p * p;
  }
  a(1, 0) = a(0, 1);
  return a / st.n;
}

InfluenceParts make_poisson_parts(std::shared_ptr<const PoissonState> state,
                                  Eigen::VectorXd theta) {
  InfluenceParts parts;
  parts.dim = 2;
  parts.hessian = poisson_curvature(*state, theta);
  parts.cond_variance = parts.hessian;
  parts.cond_variance_available = true;
  auto lambda_hat = std::make_shared<Eigen::VectorXd>(
      (theta[0] + theta[1] * state->p_hat.array())
          .min(kExponentCap)
          .exp()
          .matrix());
  parts.e_draw = [state = std::move(state), lambda_hat = std::move(lambda_hat),
                  theta = std::move(theta)](
                     const StreamKey& key, std::uint32_t s) -> Eigen::VectorXd {
    RngStream stream(key, s);
    const Eigen::VectorXd gbar =
        state->gamma +
        state->chol_cov * stream.normal_vector(state->gamma.size());
    const Eigen::VectorXd p_bar_raw = state->design * gbar;
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    long clamped = 0;
    for (Eigen::Index i = 0; i < p_bar_raw.size(); ++i) {
      double p_bar = p_bar_raw[i];
      if (p_bar < kProbFloor || p_bar > 1.0 - kProbFloor) {
        p_bar = std::clamp(p_bar, kProbFloor, 1.0 - kProbFloor);
        ++clamped;
      }
      const double lambda_bar = capped_exp(theta[0] + theta[1] * p_bar);
      const double w = (*lambda_hat)[i] - lambda_bar;
      e[0] += w;
      e[1] += w * p_bar;
    }
    if (clamped > 0 && state->clamp_count) *state->clamp_count += clamped;
    return e / std::sqrt(state->n);
  };
  return parts;
}

}  // namespace

IvEstimate iv_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& endog,
                       const Eigen::MatrixXd& exog,
                       const Eigen::MatrixXd& instruments) {
  const Eigen::Index n = y.size();
  if (endog.rows() != n || instruments.rows() != n ||
      (exog.cols() > 0 && exog.rows() != n)) {
    throw SizeMismatchError(
        "iv_estimate: outcome, endogenous, exogenous and instrument row "
        "counts disagree");
  }
  if (endog.cols() == 0) {
    throw SizeMismatchError("iv_estimate: no endogenous columns");
  }

  IvEstimate est;
  est.n = static_cast<double>(n);
  est.first_stage = joint_ols_fit(
      instruments, [&] {
        Eigen::MatrixXd ys(n, 1 + endog.cols());
        ys.col(0) = y;
        ys.rightCols(endog.cols()) = endog;
        return ys;
      }());

  auto state = std::make_shared<IvState>();
  state->a_zz = instruments.transpose() * instruments;
  state->a_zx = instruments.transpose() * exog;
  state->a_xx = exog.transpose() * exog;
  state->gamma = est.first_stage.gamma;
  state->chol_cov = est.first_stage.chol_cov;
  state->k = instruments.cols();
  state->m_d = endog.cols();
  state->m_x = exog.cols();
  state->n = est.n;

  // Projected-design Gram in instrument space:
  //   Xhat'Xhat = [G_d' Z'Z G_d, G_d' Z'X; X'Z G_d, X'X].
  const Eigen::Map<const Eigen::MatrixXd> coef(state->gamma.data(), state->k,
                                               1 + state->m_d);
  const auto gamma_d = coef.rightCols(state->m_d);
  const Eigen::Index dim = state->m_d + state->m_x;
  Eigen::MatrixXd gram(dim, dim);
  gram.topLeftCorner(state->m_d, state->m_d) =
      gamma_d.transpose() * state->a_zz * gamma_d;
  if (state->m_x > 0) {
    gram.topRightCorner(state->m_d, state->m_x) =
        gamma_d.transpose() * state->a_zx;
    gram.bottomLeftCorner(state->m_x, state->m_d) =
        gram.topRightCorner(state->m_d, state->m_x).transpose();
    gram.bottomRightCorner(state->m_x, state->m_x) = state->a_xx;
  }
  gram = symmetrize(gram);

  Eigen::VectorXd xty(dim);
  const Eigen::VectorXd zz_gy = state->a_zz * coef.col(0);
  xty.head(state->m_d) = gamma_d.transpose() * zz_gy;
  if (state->m_x > 0) {
    xty.tail(state->m_x) = state->a_zx.transpose() * coef.col(0);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram / est.n);
  const double ev_max = std::max(es.eigenvalues().maxCoeff(), 0.0);
  est.weak_design =
      es.eigenvalues().minCoeff() < kWeakDesignTol * std::max(ev_max, 1.0);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    throw SingularHessianError(
        "iv_estimate: projected design is singular; theta is not identified");
  }
  est.theta = lu.solve(xty);

  est.state_ = state;
  est.parts = make_iv_parts(state, (2.0 / est.n) * gram, est.theta);
  return est;
}

InfluenceParts IvEstimate::parts_at(const Eigen::VectorXd& theta_alt) const {
  auto state = std::static_pointer_cast<const IvState>(state_);
  return make_iv_parts(state, parts.hessian, theta_alt);
}

PoissonEstimate poisson_estimate(const Eigen::VectorXd& y,
                                 const Eigen::MatrixXd& design,
                                 const FirstStageFit& fs) {
  const Eigen::Index n = y.size();
  if (design.rows() != n) {
    throw SizeMismatchError("poisson_estimate: design has " +
                            std::to_string(design.rows()) + " rows but y has " +
                            std::to_string(n));
  }
  if (design.cols() != fs.gamma.size()) {
    throw SizeMismatchError(
        "poisson_estimate: design has " + std::to_string(design.cols()) +
        " columns but the first stage fitted " +
        std::to_string(fs.gamma.size()) + " coefficients");
  }

  auto state = std::make_shared<PoissonState>();
  state->design = design;
  state->p_hat = (design * fs.gamma)
                     .cwiseMax(kProbFloor)
                     .cwiseMin(1.0 - kProbFloor);
  state->gamma = fs.gamma;
  state->chol_cov = fs.chol_cov;
  state->clamp_count = std::make_shared<long>(0);
  state->n = static_cast<double>(n);

  // Newton with step halving on the pseudo-likelihood
  //   (1/n) sum_i [y_i (theta_0 + theta_1 p_i) - exp(theta_0 + theta_1 p_i)].
  const double y_mean = std::max(y.mean(), 1e-8);
  Eigen::Vector2d theta(std::log(y_mean), 0.0);
  const auto objective = [&](const Eigen::Vector2d& t) {
    double val = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double eta = t[0] + t[1] * state->p_hat[i];
      val += y[i] * eta - capped_exp(eta);
    }
    return val / state->n;
  };
  const auto score = [&](const Eigen::Vector2d& t) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = state->p_hat[i];
      const double r = y[i] - capped_exp(t[0] + t[1] * p);
      g[0] += r;
      g[1] += r * p;
    }
    return Eigen::Vector2d(g / state->n);
  };

  PoissonEstimate est;
  const double tol = 1e-10 * (1.0 + y_mean);
  double obj = objective(theta);
  bool converged = false;
  for (est.iterations = 0; est.iterations < 100; ++est.iterations) {
    const Eigen::Vector2d g = score(theta);
    if (g.cwiseAbs().maxCoeff() < tol) {
      converged = true;
      break;
    }
    const Eigen::Matrix2d h = poisson_curvature(*state, theta);
    Eigen::Vector2d step = h.ldlt().solve(g);
    if (!step.allFinite()) step = g;
    double scale = 1.0;
    bool improved = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const Eigen::Vector2d cand = theta + scale * step;
      const double cand_obj = objective(cand);
      if (cand_obj > obj - 1e-14 * (1.0 + std::abs(obj))) {
        theta = cand;
        obj = cand_obj;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  if (!converged) {
    const double gnorm = score(theta).cwiseAbs().maxCoeff();
    if (gnorm > 1e2 * tol) {
      throw NonConvergenceError(
          "poisson_estimate: Newton stalled with max |score| = " +
          std::to_string(gnorm));
    }
  }
  const double eta_max =
      theta[0] + (theta[1] >= 0 ? theta[1] * state->p_hat.maxCoeff()
                                : theta[1] * state->p_hat.minCoeff());
  if (eta_max >= kExponentCap) {
    throw OverflowError(
        "poisson_estimate: fitted exponent exceeds the overflow cap at the "
        "optimum");
  }

  est.theta = theta;
  est.n = state->n;
  est.redraw_clamp_count = state->clamp_count;
  est.state_ = state;
  est.parts = make_poisson_parts(state, est.theta);
  return est;
}

InfluenceParts PoissonEstimate::parts_at(const Eigen::VectorXd& theta_alt) const {
  auto state = std::static_pointer_cast<const PoissonState>(state_);
  return make_poisson_parts(state, theta_alt);
}

}  // namespace tsinfer
