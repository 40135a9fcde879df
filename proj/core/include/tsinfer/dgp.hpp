#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "tsinfer/rng.hpp"

namespace tsinfer {

// The four synthetic designs used in the calibration study.
enum class DgpId { kA, kB, kC, kD };

struct DgpSpec {
  DgpId id = DgpId::kA;
  Eigen::Index n = 250;
  // B: instrument count = round_half_even(multiplier * sqrt(n)).
  int b_multiplier = 2;
  // C: exponent of the labelled-subsample size, n_star = round(n^alpha).
  double c_alpha = 1.0;
  // D: number of jointly dependent series.
  int d_series = 2;
};

// Round-half-to-even nearest integer, used wherever a tabulated size is
// derived from a real-valued formula so the result is reproducible.
long round_half_even(double x);

// Canonical spec for a given design and sample size: fills the size-linked
// extras (C's subsample exponent, D's series count) from the calibration
// tables when n matches a tabulated size, and leaves A/B untouched beyond
// the multiplier.  Throws OutOfRangeError for C/D when n is not tabulated
// (their extras have no defined value elsewhere).
DgpSpec make_dgp_spec(DgpId id, Eigen::Index n, int b_multiplier = 2);

// True parameter vector targeted by the estimator for the design.
Eigen::VectorXd dgp_theta0(const DgpSpec& spec);

// Treatment-effect designs (A and B): outcome, binary treatment, and raw
// instrument columns (no intercept; callers prepend one for the regression).
struct IvData {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::MatrixXd z;
};

// Count-outcome design (C): the regressor probability is latent; d labels
// are usable only for the first n_star observations.
struct PoissonData {
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  Eigen::VectorXd d;
  Eigen::Index n_star = 0;
};

// Dependent-returns design (D): n x k panel, burn-in already discarded.
struct PanelData {
  Eigen::MatrixXd y;
};

IvData generate_iv(const DgpSpec& spec, RngStream& stream);
PoissonData generate_poisson(const DgpSpec& spec, RngStream& stream);
PanelData generate_panel(const DgpSpec& spec, RngStream& stream);

// Poisson(lambda) count by multiplicative inversion; exact for the moderate
// rates used here.
long poisson_draw(double lambda, RngStream& stream);

// One k-variate Clayton(theta) observation via the gamma frailty
// representation: u_p = (1 + e_p / w)^{-1/theta} with w ~ Gamma(1/theta),
// e_p ~ Exp(1).
Eigen::VectorXd clayton_draw(int k, double theta, RngStream& stream);

}  // namespace tsinfer
