#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <tsinfer/dgp.hpp>
#include <tsinfer/errors.hpp>
#include <tsinfer/first_stage.hpp>
#include <tsinfer/rng.hpp>
#include <tsinfer/spline.hpp>

using namespace tsinfer;

namespace {

Eigen::MatrixXd random_design(Eigen::Index n, Eigen::Index p, StreamKey key) {
  RngStream s(key, 0);
  Eigen::MatrixXd z(n, p);
  z.col(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      z(i, j) = s.normal();
    }
  }
  return z;
}

}  // namespace

TEST_CASE("three-point regression matches the hand-computed solution") {
  Eigen::MatrixXd z(3, 2);
  z << 1.0, 0.0, 1.0, 1.0, 1.0, 2.0;
  Eigen::VectorXd y(3);
  y << 0.0, 1.0, 3.0;
  const FirstStageFit fit = ols_fit(z, y);
  CHECK(fit.gamma[0] == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
  CHECK(fit.gamma[1] == doctest::Approx(1.5).epsilon(1e-12));

  // Direct sandwich: (Z'Z)^{-1} Z' diag(e^2) Z (Z'Z)^{-1}.
  const Eigen::VectorXd e = y - z * fit.gamma;
  const Eigen::MatrixXd bread = (z.transpose() * z).inverse();
  const Eigen::MatrixXd meat =
      z.transpose() * e.array().square().matrix().asDiagonal() * z;
  const Eigen::MatrixXd cov = bread * meat * bread;
  CHECK((fit.cov_gamma - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("least squares satisfies the normal equations") {
  const Eigen::MatrixXd z = random_design(100, 3, StreamKey{31, 0});
  RngStream s(StreamKey{31, 1}, 0);
  Eigen::VectorXd y(100);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y[i] = 2.0 * z(i, 1) - z(i, 2) + 0.5 * s.normal();
  }
  const FirstStageFit fit = ols_fit(z, y);
  const Eigen::VectorXd resid = y - z * fit.gamma;
  CHECK((z.transpose() * resid).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.residuals.col(0) - resid).cwiseAbs().maxCoeff() < 1e-10);

  // predict() evaluates the fitted equation at a new row.
  Eigen::VectorXd row(3);
  row << 1.0, 0.3, -0.7;
  CHECK(fit.predict(row)[0] == doctest::Approx(fit.gamma.dot(row)).epsilon(1e-12));
}

TEST_CASE("rank-deficient designs are rejected") {
  Eigen::MatrixXd z(4, 2);
  z << 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0;
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, 3.0, 4.0;
  CHECK_THROWS_AS((void)ols_fit(z, y), RankDeficientError);
}

TEST_CASE("joint fit marginals equal the single-equation fits") {
  const Eigen::MatrixXd z = random_design(120, 3, StreamKey{32, 0});
  RngStream s(StreamKey{32, 1}, 0);
  Eigen::VectorXd y(120), d(120);
  for (Eigen::Index i = 0; i < 120; ++i) {
    const double shared = s.normal();
    y[i] = z(i, 1) + shared + 0.3 * s.normal();
    d[i] = -0.5 * z(i, 2) + shared;
  }
  const FirstStageFit joint = joint_ols_fit(z, y, d);
  const FirstStageFit fy = ols_fit(z, y);
  const FirstStageFit fd = ols_fit(z, d);

  REQUIRE(joint.gamma.size() == 6);
  CHECK((joint.gamma.head(3) - fy.gamma).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((joint.gamma.tail(3) - fd.gamma).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((joint.cov_gamma.topLeftCorner(3, 3) - fy.cov_gamma).cwiseAbs().maxCoeff() <
        1e-10);
  CHECK((joint.cov_gamma.bottomRightCorner(3, 3) - fd.cov_gamma).cwiseAbs().maxCoeff() <
        1e-10);

  // Correlated residuals must show up in the off-diagonal block.
  CHECK(joint.cov_gamma.topRightCorner(3, 3).cwiseAbs().maxCoeff() > 1e-5);

  // Duplicating the outcome duplicates every block.
  const FirstStageFit dup = joint_ols_fit(z, y, y);
  CHECK((dup.cov_gamma.topLeftCorner(3, 3) - dup.cov_gamma.bottomRightCorner(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((dup.cov_gamma.topRightCorner(3, 3) - dup.cov_gamma.topLeftCorner(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // Matrix-outcome overload agrees with the two-vector overload.
  Eigen::MatrixXd ys(120, 2);
  ys.col(0) = y;
  ys.col(1) = d;
  const FirstStageFit m = joint_ols_fit(z, ys);
  CHECK((m.gamma - joint.gamma).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.cov_gamma - joint.cov_gamma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stacked covariance matches redraw dispersion on a treatment design") {
  DgpSpec spec = make_dgp_spec(DgpId::kA, 500);
  RngStream gen(StreamKey{33, 0}, 0);
  const IvData data = generate_iv(spec, gen);
  Eigen::MatrixXd z(data.z.rows(), 1 + data.z.cols());
  z.col(0).setOnes();
  z.rightCols(data.z.cols()) = data.z;
  const FirstStageFit fit = joint_ols_fit(z, data.y, data.d);

  const int redraws = 20000;
  Eigen::MatrixXd draws(redraws, fit.gamma.size());
  const StreamKey key{33, 1};
  for (int s = 0; s < redraws; ++s) {
    draws.row(s) = draw_fs(fit, key, static_cast<std::uint32_t>(s)).transpose();
  }
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::MatrixXd sample_cov =
      centered.transpose() * centered / (redraws - 1.0);
  CHECK((sample_cov - fit.cov_gamma).norm() / fit.cov_gamma.norm() < 0.10);
  for (Eigen::Index k = 0; k < fit.gamma.size(); ++k) {
    CHECK(sample_cov(k, k) ==
          doctest::Approx(fit.cov_gamma(k, k)).epsilon(0.10));
    CHECK(std::abs(mean[k] - fit.gamma[k]) < 0.01);
  }
}

TEST_CASE("scalar coefficient redraws match their first two moments") {
  FirstStageFit fit;
  fit.gamma = Eigen::VectorXd::Constant(1, 1.0);
  fit.cov_gamma = Eigen::MatrixXd::Constant(1, 1, 4.0);
  fit.chol_cov = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const StreamKey key{34, 0};
  const int n = 100000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int s = 0; s < n; ++s) {
    const double x = draw_fs(fit, key, static_cast<std::uint32_t>(s))[0];
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(std::abs(var - 4.0) < 0.1);

  // A redraw is a pure function of (key, index).
  const double again = draw_fs(fit, key, 17)[0];
  const double again2 = draw_fs(fit, key, 17)[0];
  CHECK(again == again2);
}

namespace {

std::vector<double> half_unit_knots(double lo, double hi) {
  std::vector<double> knots;
  for (double t = lo; t <= hi + 1e-9; t += 0.5) {
    knots.push_back(t);
  }
  return knots;
}

// Exact one-sided left limit of a piecewise-polynomial basis combination at
// a knot, from Lagrange extrapolation through points strictly inside the
// left segment (a degree-(3 - order) polynomial there, so it is exact).
double left_limit(const CubicSplineBasis& basis, const Eigen::VectorXd& coef,
                  double knot, double width, int order) {
  const int points = 4 - order;
  std::vector<double> xs, ys;
  for (int i = 0; i < points; ++i) {
    const double x = knot - width * (0.2 + 0.6 * i / std::max(points - 1, 1));
    xs.push_back(x);
    ys.push_back(basis.derivative_row(x, order) * coef);
  }
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    double w = 1.0;
    for (int j = 0; j < points; ++j) {
      if (j != i) {
        w *= (knot - xs[j]) / (xs[i] - xs[j]);
      }
    }
    acc += w * ys[i];
  }
  return acc;
}

}  // namespace

TEST_CASE("spline basis reproduces constants and linear functions") {
  const CubicSplineBasis basis(half_unit_knots(0.0, 10.0));
  CHECK(basis.size() == 19 + 4);  // 21 knots: 19 interior + cubic end conditions

  RngStream s(StreamKey{35, 0}, 0);
  const Eigen::Index n = 400;
  Eigen::VectorXd z(n), constant(n), linear(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z[i] = 10.0 * s.uniform();
    constant[i] = 3.25;
    linear[i] = 2.0 * z[i] + 1.0;
  }
  const FirstStageFit fc = spline_gam_fit(z, constant, half_unit_knots(0.0, 10.0));
  const FirstStageFit fl = spline_gam_fit(z, linear, half_unit_knots(0.0, 10.0));
  for (double t = 0.05; t < 10.0; t += 0.173) {
    CHECK(fc.predict(Eigen::VectorXd::Constant(1, t))[0] ==
          doctest::Approx(3.25).epsilon(1e-8));
    CHECK(fl.predict(Eigen::VectorXd::Constant(1, t))[0] ==
          doctest::Approx(2.0 * t + 1.0).epsilon(1e-8));
  }
}

TEST_CASE("spline basis is twice continuously differentiable at the knots") {
  const std::vector<double> knots = half_unit_knots(0.0, 10.0);
  const CubicSplineBasis basis(knots);
  RngStream s(StreamKey{36, 0}, 0);
  Eigen::VectorXd coef(basis.size());
  for (Eigen::Index i = 0; i < coef.size(); ++i) {
    coef[i] = s.normal();
  }
  const double scale = coef.cwiseAbs().maxCoeff();
  for (std::size_t k = 1; k + 1 < knots.size(); ++k) {
    for (int order = 0; order <= 2; ++order) {
      const double right = basis.derivative_row(knots[k], order) * coef;
      const double left = left_limit(basis, coef, knots[k], 0.5, order);
      CHECK(std::abs(right - left) < 1e-8 * (1.0 + std::abs(right) + scale));
    }
  }
}

TEST_CASE("spline fit recovers a smooth probability from noisy labels") {
  // d ~ Bernoulli(sin^2(pi z)) observed on 5,000 points.
  RngStream s(StreamKey{37, 0}, 0);
  const Eigen::Index n = 5000;
  Eigen::VectorXd z(n), d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z[i] = 10.0 * s.uniform();
    const double p = std::pow(std::sin(M_PI * z[i]), 2);
    d[i] = s.uniform() < p ? 1.0 : 0.0;
  }
  SplineFitDiagnostics diag;
  const FirstStageFit fit = spline_gam_fit(z, d, half_unit_knots(0.0, 10.0), &diag);
  double worst = 0.0;
  for (int j = 0; j <= 200; ++j) {
    const double t = static_cast<double>(j) / 20.0;
    const double p = std::pow(std::sin(M_PI * t), 2);
    const double err = std::abs(fit.predict(Eigen::VectorXd::Constant(1, t))[0] - p);
    worst = std::max(worst, err);
  }
  CHECK(worst < 0.05);
  CHECK(*diag.clamp_count == 0);

  // Out-of-span prediction clamps and counts.
  (void)fit.predict(Eigen::VectorXd::Constant(1, 11.0));
  (void)fit.predict(Eigen::VectorXd::Constant(1, -1.0));
  CHECK(*diag.clamp_count == 2);
  CHECK(fit.predict(Eigen::VectorXd::Constant(1, 11.0))[0] ==
        doctest::Approx(fit.predict(Eigen::VectorXd::Constant(1, 10.0))[0]));
}
