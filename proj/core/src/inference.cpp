#include "tsinfer/inference.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <vector>

#include "tsinfer/ecdf.hpp"
#include "tsinfer/errors.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

namespace {

constexpr std::uint64_t kZetaTag = 0x7A657461u;   // normal-part sub-stream
constexpr std::uint64_t kEDrawTag = 0x65647277u;  // e-part sub-stream

Eigen::PartialPivLU<Eigen::MatrixXd> factor_hessian(const InfluenceParts& parts) {
  if (parts.hessian.rows() != parts.dim || parts.hessian.cols() != parts.dim) {
    throw SizeMismatchError("simulate_psi: hessian dimension mismatch");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(parts.hessian);
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond < 1e-13) {
    throw SingularHessianError("hessian is numerically singular");
  }
  return lu;
}

void check_inputs(const InfluenceParts& parts, double n, int kappa) {
  if (!(n > 0)) {
    throw SizeMismatchError("simulate_psi: n must be positive");
  }
  if (kappa < 1) {
    throw EmptySampleError("simulate_psi: kappa must be at least 1");
  }
  if (!parts.e_draw) {
    throw EmptySampleError("simulate_psi: e_draw is not set");
  }
}

PsiSample assemble_psi(const InfluenceParts& parts, double n, int kappa,
                       const StreamKey& rng, bool recenter, DebiasMode mode) {
  check_inputs(parts, n, kappa);
  const auto lu = factor_hessian(parts);
  const Eigen::Index dim = parts.dim;

  Eigen::MatrixXd sqrt_v = Eigen::MatrixXd::Zero(dim, dim);
  if (parts.cond_variance_available && parts.cond_variance.size() > 0 &&
      parts.cond_variance.cwiseAbs().maxCoeff() > 0.0) {
    if (parts.cond_variance.rows() != dim || parts.cond_variance.cols() != dim) {
      throw SizeMismatchError("simulate_psi: cond_variance dimension mismatch");
    }
    sqrt_v = cholesky_sqrt(parts.cond_variance);
  }
  const bool have_normal_part = sqrt_v.cwiseAbs().maxCoeff() > 0.0;

  const StreamKey zeta_key = rng.derived(kZetaTag);
  const StreamKey e_key = rng.derived(kEDrawTag);

  PsiSample out;
  out.n = n;
  out.draws.resize(kappa, dim);
  out.e_draws.resize(kappa, dim);
  for (int s = 0; s < kappa; ++s) {
    const Eigen::VectorXd e = parts.e_draw(e_key, static_cast<std::uint32_t>(s));
    if (e.size() != dim) {
      throw SizeMismatchError("simulate_psi: e_draw returned wrong dimension");
    }
    out.e_draws.row(s) = e.transpose();
  }

  Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
  if (recenter) {
    center = e_location(out.e_draws, mode);
  }

  for (int s = 0; s < kappa; ++s) {
    Eigen::VectorXd shock = out.e_draws.row(s).transpose() - center;
    if (have_normal_part) {
      RngStream zeta(zeta_key, static_cast<std::uint32_t>(s));
      shock += sqrt_v * zeta.normal_vector(dim);
    }
    out.draws.row(s) = lu.solve(shock).transpose();
  }
  return out;
}

}  // namespace

PsiSample simulate_psi(const InfluenceParts& parts, double n, int kappa,
                       const StreamKey& rng) {
  return assemble_psi(parts, n, kappa, rng, /*recenter=*/false, DebiasMode::kMean);
}

Eigen::MatrixXd confidence_interval(const Eigen::VectorXd& theta_hat,
                                    const PsiSample& psi, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw LevelMismatchError("confidence_interval: level must be in (0, 1)");
  }
  if (theta_hat.size() != psi.draws.cols()) {
    throw SizeMismatchError("confidence_interval: dimension mismatch");
  }
  if (psi.draws.rows() == 0) {
    throw EmptySampleError("confidence_interval: empty psi sample");
  }
  const double alpha = 1.0 - level;
  const double root_n = std::sqrt(psi.n);
  Eigen::MatrixXd bounds(theta_hat.size(), 2);
  for (Eigen::Index k = 0; k < theta_hat.size(); ++k) {
    const Eigen::VectorXd centered =
        theta_hat[k] - psi.draws.col(k).array() / root_n;
    const EmpiricalCdf cdf = empirical_cdf(centered);
    bounds(k, 0) = cdf.quantile(alpha / 2.0);
    bounds(k, 1) = cdf.quantile(1.0 - alpha / 2.0);
  }
  return bounds;
}

Eigen::MatrixXd asymptotic_variance(const InfluenceParts& parts,
                                    const PsiSample& psi, double n) {
  const auto lu = factor_hessian(parts);
  const Eigen::Index dim = parts.dim;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dim, dim);
  if (parts.cond_variance_available && parts.cond_variance.size() > 0) {
    sigma = symmetrize(parts.cond_variance);
  }
  const Eigen::Index kappa = psi.e_draws.rows();
  if (kappa >= 2) {
    const Eigen::RowVectorXd mean = psi.e_draws.colwise().mean();
    const Eigen::MatrixXd centered = psi.e_draws.rowwise() - mean;
    sigma += centered.transpose() * centered / static_cast<double>(kappa - 1);
  }
  const Eigen::MatrixXd inv_a_sigma = lu.solve(sigma);
  const Eigen::MatrixXd inv_a_t = lu.solve(Eigen::MatrixXd::Identity(dim, dim)).transpose();
  return symmetrize(inv_a_sigma * inv_a_t) / n;
}

Eigen::VectorXd e_location(const Eigen::MatrixXd& e_draws, DebiasMode mode) {
  if (e_draws.rows() == 0) {
    throw EmptySampleError("e_location: empty draw matrix");
  }
  if (mode == DebiasMode::kMedian) {
    Eigen::VectorXd med(e_draws.cols());
    std::vector<double> col(static_cast<std::size_t>(e_draws.rows()));
    const auto m = static_cast<std::ptrdiff_t>(e_draws.rows());
    const std::ptrdiff_t rank = (m + 1) / 2;  // lower median, 1-based ceil(m/2)
    for (Eigen::Index k = 0; k < e_draws.cols(); ++k) {
      for (Eigen::Index s = 0; s < e_draws.rows(); ++s) {
        col[static_cast<std::size_t>(s)] = e_draws(s, k);
      }
      std::nth_element(col.begin(), col.begin() + (rank - 1), col.end());
      med[k] = col[static_cast<std::size_t>(rank - 1)];
    }
    return med;
  }
  return e_draws.colwise().mean().transpose();
}

Eigen::VectorXd debias(const Eigen::VectorXd& theta_hat,
                       const InfluenceParts& parts, const PsiSample& psi,
                       double n, DebiasMode mode) {
  if (mode == DebiasMode::kOff) {
    return theta_hat;
  }
  if (theta_hat.size() != parts.dim) {
    throw SizeMismatchError("debias: dimension mismatch");
  }
  const auto lu = factor_hessian(parts);
  const Eigen::VectorXd omega = e_location(psi.e_draws, mode);
  return theta_hat - lu.solve(omega) / std::sqrt(n);
}

PsiSample debiased_psi(const InfluenceParts& parts_star, double n, int kappa,
                       const StreamKey& rng, DebiasMode mode) {
  return assemble_psi(parts_star, n, kappa, rng, /*recenter=*/true, mode);
}

}  // namespace tsinfer
