#include "tsinfer/first_stage.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <string>

#include "tsinfer/errors.hpp"
#include "tsinfer/linalg.hpp"

namespace tsinfer {

namespace {

// Factor Z'Z, rejecting rank-deficient designs with the offending columns.
Eigen::LLT<Eigen::MatrixXd> factor_gram(const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd gram = z.transpose() * z;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-12);
    std::string which;
    const auto perm = lu.permutationQ().indices();
    for (Eigen::Index i = lu.rank(); i < z.cols(); ++i) {
      which += (which.empty() ? "" : ", ") + std::to_string(perm[i]);
    }
    throw RankDeficientError("ols_fit: design is rank deficient (columns " +
                             which + ")");
  }
  return llt;
}

}  // namespace

FirstStageFit joint_ols_fit(const Eigen::MatrixXd& z, const Eigen::MatrixXd& ys) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  const Eigen::Index m = ys.cols();
  if (ys.rows() != n) {
    throw SizeMismatchError("joint_ols_fit: row counts differ");
  }
  if (n < p) {
    throw RankDeficientError("joint_ols_fit: fewer observations than columns");
  }
  const auto llt = factor_gram(z);

  FirstStageFit fit;
  fit.coef = llt.solve(z.transpose() * ys);
  fit.residuals = ys - z * fit.coef;
  fit.gamma.resize(p * m);
  for (Eigen::Index e = 0; e < m; ++e) {
    fit.gamma.segment(e * p, p) = fit.coef.col(e);
  }

  // Sandwich over stacked scores: block (a, b) = (Z'Z)^-1 S_ab (Z'Z)^-1 with
  // S_ab = sum_i nu_ai nu_bi z_i z_i'.
  fit.cov_gamma.resize(p * m, p * m);
  std::vector<Eigen::MatrixXd> weighted(static_cast<std::size_t>(m));
  for (Eigen::Index e = 0; e < m; ++e) {
    weighted[static_cast<std::size_t>(e)] =
        z.array().colwise() * fit.residuals.col(e).array();
  }
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a; b < m; ++b) {
      const Eigen::MatrixXd meat = weighted[static_cast<std::size_t>(a)].transpose() *
                                   weighted[static_cast<std::size_t>(b)];
      const Eigen::MatrixXd block = llt.solve(llt.solve(meat).transpose());
      fit.cov_gamma.block(a * p, b * p, p, p) = block.transpose();
      fit.cov_gamma.block(b * p, a * p, p, p) = block;
    }
  }
  fit.cov_gamma = symmetrize(fit.cov_gamma);
  fit.chol_cov = cholesky_sqrt(fit.cov_gamma);

  const Eigen::MatrixXd coef = fit.coef;
  fit.predict = [coef](const Eigen::VectorXd& row) -> Eigen::VectorXd {
    return coef.transpose() * row;
  };
  return fit;
}

FirstStageFit ols_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
  return joint_ols_fit(z, Eigen::MatrixXd(y));
}

FirstStageFit joint_ols_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& d) {
  Eigen::MatrixXd ys(y.size(), 2);
  ys.col(0) = y;
  ys.col(1) = d;
  return joint_ols_fit(z, ys);
}

Eigen::VectorXd draw_fs(const FirstStageFit& fit, const StreamKey& key,
                        std::uint32_t s) {
  RngStream stream(key, s);
  return fit.gamma + fit.chol_cov * stream.normal_vector(fit.gamma.size());
}

}  // namespace tsinfer
