#include "tsinfer/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "tsinfer/errors.hpp"

namespace tsinfer {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd cholesky_sqrt(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw SizeMismatchError("cholesky_sqrt: matrix must be square");
  }
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol * (1.0 + scale)) {
    throw NotSymmetricError("cholesky_sqrt: matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = symmetrize(m);
  if (scale == 0.0) {
    return Eigen::MatrixXd::Zero(m.rows(), m.cols());
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
  Eigen::VectorXd d = ldlt.vectorD();
  const double floor = -kPsdTol * scale;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] < floor) {
      throw NotPsdError("cholesky_sqrt: negative pivot beyond tolerance");
    }
    d[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
  }
  Eigen::MatrixXd l = ldlt.matrixL();
  l = ldlt.transpositionsP().transpose() * l;
  l *= d.asDiagonal();
  return l;
}

Eigen::MatrixXd clip_to_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace tsinfer
