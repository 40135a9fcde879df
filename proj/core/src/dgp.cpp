#include "tsinfer/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsinfer/errors.hpp"
#include "tsinfer/garch.hpp"

namespace tsinfer {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Calibration-table extras for designs C and D, keyed by sample size.
double c_alpha_for(Eigen::Index n) {
  switch (n) {
    case 250: return 1.0;
    case 500: return 0.985;
    case 1000: return 0.945;
    case 2000: return 0.91;
    default:
      throw OutOfRangeError("make_dgp_spec: no tabulated subsample exponent "
                            "for n = " + std::to_string(n));
  }
}

int d_series_for(Eigen::Index n) {
  switch (n) {
    case 250: return 2;
    case 500: return 3;
    case 1000: return 5;
    case 2000: return 8;
    default:
      throw OutOfRangeError("make_dgp_spec: no tabulated series count for "
                            "n = " + std::to_string(n));
  }
}

}  // namespace

long round_half_even(double x) {
  // nearbyint honours the default round-to-nearest-even FP mode.
  return static_cast<long>(std::nearbyint(x));
}

DgpSpec make_dgp_spec(DgpId id, Eigen::Index n, int b_multiplier) {
  DgpSpec spec;
  spec.id = id;
  spec.n = n;
  if (id == DgpId::kB) {
    if (b_multiplier != 2 && b_multiplier != 4) {
      throw OutOfRangeError("make_dgp_spec: instrument multiplier must be 2 "
                            "or 4, got " + std::to_string(b_multiplier));
    }
    spec.b_multiplier = b_multiplier;
  } else if (id == DgpId::kC) {
    spec.c_alpha = c_alpha_for(n);
  } else if (id == DgpId::kD) {
    spec.d_series = d_series_for(n);
  }
  return spec;
}

Eigen::VectorXd dgp_theta0(const DgpSpec& spec) {
  switch (spec.id) {
    case DgpId::kA:
    case DgpId::kB:
      return Eigen::VectorXd::Constant(1, 1.0);
    case DgpId::kC: {
      Eigen::VectorXd theta(2);
      theta << -0.8, 2.0;
      return theta;
    }
    case DgpId::kD:
      return Eigen::VectorXd::Constant(1, 4.0);
  }
  throw OutOfRangeError("dgp_theta0: unknown design");
}

IvData generate_iv(const DgpSpec& spec, RngStream& stream) {
  const Eigen::Index n = spec.n;
  IvData data;
  data.y.resize(n);
  data.d.resize(n);

  if (spec.id == DgpId::kA) {
    data.z.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = stream.uniform();
      const double eps = 2.0 * stream.uniform() - 1.0;
      const double d = z > 0.5 * (eps + 1.2) ? 1.0 : 0.0;
      data.z(i, 0) = z;
      data.d[i] = d;
      data.y[i] = d + eps;
    }
    return data;
  }
  if (spec.id != DgpId::kB) {
    throw OutOfRangeError("generate_iv: spec is not a treatment design");
  }

  const long k = round_half_even(spec.b_multiplier * std::sqrt(
                                     static_cast<double>(n)));
  data.z.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (long j = 0; j < k; ++j) data.z(i, j) = 0.2 * stream.uniform();
    const double eps = 2.0 * stream.uniform() - 1.0;
    const double index = 0.2 + data.z.row(i).head(4).sum();
    const double d = index > 0.5 * (eps + 1.2) ? 1.0 : 0.0;
    data.d[i] = d;
    data.y[i] = d + eps;
  }
  return data;
}

PoissonData generate_poisson(const DgpSpec& spec, RngStream& stream) {
  if (spec.id != DgpId::kC) {
    throw OutOfRangeError("generate_poisson: spec is not the count design");
  }
  const Eigen::Index n = spec.n;
  PoissonData data;
  data.y.resize(n);
  data.z.resize(n);
  data.d.resize(n);
  data.n_star = round_half_even(
      std::pow(static_cast<double>(n), spec.c_alpha));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 10.0 * stream.uniform();
    const double s = std::sin(kPi * z);
    const double p = s * s;
    data.z[i] = z;
    data.d[i] = stream.uniform() < p ? 1.0 : 0.0;
    data.y[i] = static_cast<double>(
        poisson_draw(std::exp(-0.8 + 2.0 * p), stream));
  }
  return data;
}

PanelData generate_panel(const DgpSpec& spec, RngStream& stream) {
  if (spec.id != DgpId::kD) {
    throw OutOfRangeError("generate_panel: spec is not the returns design");
  }
  constexpr long kBurnIn = 500;
  constexpr double kPhi1 = 0.4;
  constexpr double kBeta0 = 0.05;
  constexpr double kBeta1 = 0.05;
  constexpr double kBeta2 = 0.9;
  constexpr double kNu = 6.0;
  constexpr double kThetaCopula = 4.0;

  const int k = spec.d_series;
  const Eigen::Index n = spec.n;
  PanelData data;
  data.y.resize(n, k);

  // Start each volatility recursion at its stationary level.
  Eigen::VectorXd sigma2 =
      Eigen::VectorXd::Constant(k, kBeta0 / (1.0 - kBeta1 - kBeta2));
  Eigen::VectorXd eps2 = Eigen::VectorXd::Ones(k);
  Eigen::VectorXd y_prev = Eigen::VectorXd::Zero(k);
  for (long t = 0; t < kBurnIn + n; ++t) {
    const Eigen::VectorXd u = clayton_draw(k, kThetaCopula, stream);
    for (int p = 0; p < k; ++p) {
      sigma2[p] = kBeta0 + kBeta1 * sigma2[p] * eps2[p] + kBeta2 * sigma2[p];
      // Guard against copula draws rounding onto the unit boundary, where
      // the quantile transform is infinite.
      const double up = std::clamp(u[p], 1e-12, 1.0 - 1e-12);
      const double eps = std_t_quantile(up, kNu);
      const double y = kPhi1 * y_prev[p] + std::sqrt(sigma2[p]) * eps;
      eps2[p] = eps * eps;
      y_prev[p] = y;
      if (t >= kBurnIn) data.y(t - kBurnIn, p) = y;
    }
  }
  return data;
}

long poisson_draw(double lambda, RngStream& stream) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw DomainError("poisson_draw: rate must be finite and non-negative");
  }
  const double limit = std::exp(-lambda);
  long count = -1;
  double product = 1.0;
  do {
    product *= stream.uniform();
    ++count;
  } while (product > limit);
  return count;
}

Eigen::VectorXd clayton_draw(int k, double theta, RngStream& stream) {
  if (theta <= 0.0) {
    throw DomainError("clayton_draw: dependence parameter must be positive");
  }
  const double w = stream.gamma(1.0 / theta);
  Eigen::VectorXd u(k);
  for (int p = 0; p < k; ++p) {
    u[p] = std::pow(1.0 + stream.exponential() / w, -1.0 / theta);
  }
  return u;
}

}  // namespace tsinfer
