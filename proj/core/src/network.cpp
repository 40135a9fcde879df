#include "tsinfer/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tsinfer/errors.hpp"
#include "tsinfer/first_stage.hpp"
#include "tsinfer/linalg.hpp"
#include "tsinfer/second_stage.hpp"

namespace tsinfer {

namespace {

constexpr double kPruneTol = 1e-10;
constexpr double kWeakTol = 1e-8;

// Stacked estimation data across groups.  Raw blocks are kept alongside the
// (possibly demeaned) regression blocks so group intercepts can be recovered
// after the slope fit.
struct Assembled {
  Eigen::VectorXd y, gy;    // regression outcome and peer average
  Eigen::MatrixXd exog;     // [X, GtX] (+ intercept without fixed effects)
  Eigen::VectorXd y0, gy0;  // raw stacked copies
  Eigen::MatrixXd x0, gx0;
  std::vector<Eigen::MatrixXd> gt;  // row-normalized adjacency per group
  std::vector<Eigen::Index> offset;
  std::vector<Eigen::Index> size;
  Eigen::Index k = 0;  // covariates
  bool fe = false;
};

void demean_by_group(const Assembled& a, Eigen::MatrixXd& m) {
  for (std::size_t g = 0; g < a.offset.size(); ++g) {
    auto block = m.middleRows(a.offset[g], a.size[g]);
    block.rowwise() -= block.colwise().mean();
  }
}

void demean_by_group(const Assembled& a, Eigen::VectorXd& v) {
  for (std::size_t g = 0; g < a.offset.size(); ++g) {
    auto block = v.segment(a.offset[g], a.size[g]);
    block.array() -= block.mean();
  }
}

Assembled assemble(const SchoolNetwork& net, bool fe) {
  if (net.groups.empty()) {
    throw EmptySampleError("network estimation: no groups");
  }
  Assembled a;
  a.fe = fe;
  a.k = net.covariates();
  const Eigen::Index n = net.total_nodes();
  a.y0.resize(n);
  a.gy0.resize(n);
  a.x0.resize(n, a.k);
  a.gx0.resize(n, a.k);
  Eigen::Index at = 0;
  for (const NetworkGroup& group : net.groups) {
    const Eigen::Index m = group.y.size();
    Eigen::MatrixXd gt = row_normalized(group.adjacency);
    a.offset.push_back(at);
    a.size.push_back(m);
    a.y0.segment(at, m) = group.y;
    a.gy0.segment(at, m) = gt * group.y;
    a.x0.middleRows(at, m) = group.x;
    a.gx0.middleRows(at, m) = gt * group.x;
    a.gt.push_back(std::move(gt));
    at += m;
  }
  a.y = a.y0;
  a.gy = a.gy0;
  if (fe) {
    a.exog.resize(n, 2 * a.k);
    a.exog << a.x0, a.gx0;
    demean_by_group(a, a.exog);
    demean_by_group(a, a.y);
    demean_by_group(a, a.gy);
  } else {
    a.exog.resize(n, 2 * a.k + 1);
    a.exog << a.x0, a.gx0, Eigen::VectorXd::Ones(n);
  }
  return a;
}

// Keep the candidate columns that add numerical rank over `base` plus the
// previously kept candidates (modified Gram-Schmidt sweep); report the
// dropped candidate indices.  Column decisions are made left to right, so
// the result does not depend on row order.
Eigen::MatrixXd prune_columns(const Eigen::MatrixXd& base,
                              const Eigen::MatrixXd& candidates,
                              std::vector<int>* dropped) {
  const Eigen::Index n = candidates.rows();
  Eigen::MatrixXd q(n, base.cols() + candidates.cols());
  Eigen::Index nq = 0;
  const auto absorb = [&](Eigen::VectorXd v) -> double {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < nq; ++j) {
        v -= q.col(j).dot(v) * q.col(j);
      }
    }
    const double norm = v.norm();
    if (norm > 0.0) q.col(nq++) = v / norm;
    return norm;
  };
  for (Eigen::Index j = 0; j < base.cols(); ++j) absorb(base.col(j));

  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < candidates.cols(); ++j) {
    const double scale = candidates.col(j).norm();
    const double residual = absorb(candidates.col(j));
    if (residual <= kPruneTol * scale || scale == 0.0) {
      if (residual > 0.0) --nq;  // do not extend the basis with noise
      if (dropped) dropped->push_back(static_cast<int>(j));
    } else {
      kept.push_back(j);
    }
  }
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = candidates.col(kept[c]);
  }
  return out;
}

Eigen::MatrixXd unit_scale(Eigen::MatrixXd m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double norm = m.col(j).norm();
    if (norm > 0.0) m.col(j) /= norm;
  }
  return m;
}

// Joint F statistic of the excluded-instrument block in the regression of
// `d` on [exog, w].
double excluded_f(const Eigen::VectorXd& d, const Eigen::MatrixXd& exog,
                  const Eigen::MatrixXd& w) {
  if (w.cols() == 0) return 0.0;
  const Eigen::Index n = d.size();
  Eigen::MatrixXd full(n, exog.cols() + w.cols());
  full << exog, w;
  const double rss_restricted =
      (d - exog * exog.householderQr().solve(d)).squaredNorm();
  const double rss_full =
      (d - full * full.householderQr().solve(d)).squaredNorm();
  const double df = static_cast<double>(n - full.cols());
  if (df <= 0.0 || rss_full <= 0.0) return 0.0;
  return ((rss_restricted - rss_full) / static_cast<double>(w.cols())) /
         (rss_full / df);
}

struct TslsFit {
  Eigen::VectorXd coef;  // [endogenous, exog...]
  Eigen::MatrixXd cov;
  bool weak = false;
};

// Two-stage least squares of y on [d, exog], instrumenting d with the
// excluded columns w (exog instruments itself), with an HC0 sandwich.
TslsFit tsls(const Eigen::VectorXd& y, const Eigen::VectorXd& d,
             const Eigen::MatrixXd& exog, const Eigen::MatrixXd& w) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd z(n, exog.cols() + w.cols());
  z << exog, w;
  const Eigen::VectorXd d_hat = z * z.householderQr().solve(d);

  Eigen::MatrixXd regressors(n, 1 + exog.cols());
  regressors << d, exog;
  Eigen::MatrixXd projected(n, 1 + exog.cols());
  projected << d_hat, exog;

  const Eigen::MatrixXd gram = projected.transpose() * projected;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram /
                                                    static_cast<double>(n));
  TslsFit fit;
  fit.weak = es.eigenvalues().minCoeff() <
             kWeakTol * std::max(es.eigenvalues().maxCoeff(), 1.0);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    throw RankDeficientError(
        "tsls: projected regressors are collinear; coefficients are not "
        "identified");
  }
  fit.coef = lu.solve(projected.transpose() * y);

  const Eigen::VectorXd resid = y - regressors * fit.coef;
  const Eigen::MatrixXd meat =
      projected.transpose() *
      (projected.array().colwise() * resid.array().square()).matrix();
  fit.cov = lu.solve(lu.solve(symmetrize(meat)).transpose());
  fit.cov = symmetrize(fit.cov);
  return fit;
}

// Group intercepts implied by slope estimates: the group mean of the raw
// structural residual.
Eigen::VectorXd recover_alpha(const Assembled& a, const Eigen::VectorXd& coef) {
  const Eigen::Index k = a.k;
  const double theta1 = coef[0];
  const Eigen::VectorXd theta2 = coef.segment(1, k);
  const Eigen::VectorXd theta3 = coef.segment(1 + k, k);
  const Eigen::VectorXd resid =
      a.y0 - theta1 * a.gy0 - a.x0 * theta2 - a.gx0 * theta3;
  Eigen::VectorXd alpha(static_cast<Eigen::Index>(a.offset.size()));
  for (std::size_t g = 0; g < a.offset.size(); ++g) {
    alpha[static_cast<Eigen::Index>(g)] =
        resid.segment(a.offset[g], a.size[g]).mean();
  }
  return alpha;
}

PeerEstimate finish_estimate(const SchoolNetwork& net, const Assembled& a,
                             Eigen::VectorXd coef, Eigen::MatrixXd cov,
                             bool weak, double fs_f) {
  PeerEstimate est;
  est.coef = std::move(coef);
  est.cov = std::move(cov);
  est.n_covariates = a.k;
  est.fixed_effects = a.fe;
  est.weak_design = weak;
  est.first_stage_f = fs_f;
  est.isolates = isolate_count(net);
  est.alpha = recover_alpha(a, est.coef);
  for (const NetworkGroup& g : net.groups) est.group_ids.push_back(g.id);
  return est;
}

// Stacked Gt^2 X blocks (the classical excluded instruments).
Eigen::MatrixXd squared_peer_attributes(const Assembled& a) {
  Eigen::MatrixXd w(a.y0.size(), a.k);
  for (std::size_t g = 0; g < a.gt.size(); ++g) {
    w.middleRows(a.offset[g], a.size[g]) =
        a.gt[g] * (a.gt[g] * a.x0.middleRows(a.offset[g], a.size[g]));
  }
  return w;
}

}  // namespace

Eigen::Index SchoolNetwork::total_nodes() const {
  Eigen::Index n = 0;
  for (const NetworkGroup& g : groups) n += g.y.size();
  return n;
}

Eigen::Index SchoolNetwork::covariates() const {
  return groups.empty() ? 0 : groups.front().x.cols();
}

SchoolNetwork make_network(std::vector<NetworkGroup> groups) {
  Eigen::Index k = -1;
  for (const NetworkGroup& g : groups) {
    const Eigen::Index m = g.y.size();
    if (g.adjacency.rows() != m || g.adjacency.cols() != m ||
        g.x.rows() != m) {
      throw SizeMismatchError(fmt::format(
          "make_network: group '{}' has inconsistent shapes", g.id));
    }
    if (k < 0) k = g.x.cols();
    if (g.x.cols() != k) {
      throw SizeMismatchError(fmt::format(
          "make_network: group '{}' has {} covariates, expected {}", g.id,
          g.x.cols(), k));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (g.adjacency(i, i) != 0.0) {
        throw DomainError(fmt::format(
            "make_network: group '{}' node {} has a self-friendship", g.id, i));
      }
    }
    if ((g.adjacency.array() < 0.0).any()) {
      throw DomainError(fmt::format(
          "make_network: group '{}' has negative edge weights", g.id));
    }
  }
  SchoolNetwork net;
  net.groups = std::move(groups);
  return net;
}

Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency) {
  Eigen::MatrixXd gt = adjacency;
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    const double degree = gt.row(i).sum();
    if (degree > 0.0) gt.row(i) /= degree;
  }
  return gt;
}

long isolate_count(const SchoolNetwork& net) {
  long count = 0;
  for (const NetworkGroup& g : net.groups) {
    for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i) {
      if (g.adjacency.row(i).sum() == 0.0) ++count;
    }
  }
  return count;
}

InstrumentSet build_instruments(const SchoolNetwork& net, int k_max) {
  if (k_max < 0) {
    throw OutOfRangeError("build_instruments: k_max must be non-negative");
  }
  const Eigen::Index n = net.total_nodes();
  const Eigen::Index k = net.covariates();
  Eigen::MatrixXd raw(n, (k_max + 1) * k);
  Eigen::Index at = 0;
  for (const NetworkGroup& g : net.groups) {
    const Eigen::Index m = g.y.size();
    const Eigen::MatrixXd gt = row_normalized(g.adjacency);
    Eigen::MatrixXd block = gt * (gt * g.x);  // power 2
    for (int p = 0; p <= k_max; ++p) {
      raw.block(at, p * k, m, k) = block;
      if (p < k_max) block = gt * block;
    }
    at += m;
  }
  InstrumentSet set;
  set.z = unit_scale(
      prune_columns(Eigen::MatrixXd(n, 0), raw, &set.dropped));
  return set;
}

double PeerEstimate::theta1_se() const { return std::sqrt(cov(0, 0)); }

PeerEstimate ols_estimate(const SchoolNetwork& net, bool fixed_effects) {
  const Assembled a = assemble(net, fixed_effects);
  // With the peer average instrumenting itself, the projection step is the
  // identity and tsls collapses to ordinary least squares with an HC0
  // sandwich.
  const TslsFit fit = tsls(a.y, a.gy, a.exog, a.gy);
  return finish_estimate(net, a, fit.coef, fit.cov, fit.weak, 0.0);
}

PeerEstimate civ_estimate(const SchoolNetwork& net, bool fixed_effects) {
  const Assembled a = assemble(net, fixed_effects);
  Eigen::MatrixXd w = squared_peer_attributes(a);
  if (fixed_effects) demean_by_group(a, w);
  w = unit_scale(prune_columns(a.exog, w, nullptr));
  if (w.cols() == 0) {
    throw RankDeficientError(
        "civ_estimate: no excluded instrument survives collinearity pruning");
  }
  const double fs_f = excluded_f(a.gy, a.exog, w);
  const TslsFit fit = tsls(a.y, a.gy, a.exog, w);
  return finish_estimate(net, a, fit.coef, fit.cov, fit.weak, fs_f);
}

PeerEstimate oiv_estimate(const SchoolNetwork& net, const PeerEstimate& pilot,
                          bool fixed_effects) {
  if (!(std::abs(pilot.theta1()) < 1.0)) {
    throw OutOfRangeError(fmt::format(
        "oiv_estimate: pilot peer effect {} is outside (-1, 1); the "
        "equilibrium inverse does not exist",
        pilot.theta1()));
  }
  const Assembled a = assemble(net, fixed_effects);
  if (pilot.n_covariates != a.k ||
      pilot.alpha.size() != static_cast<Eigen::Index>(a.gt.size())) {
    throw SizeMismatchError(
        "oiv_estimate: pilot was fitted on a differently shaped network");
  }
  const double theta1 = pilot.theta1();
  const Eigen::VectorXd theta2 = pilot.theta2();
  const Eigen::VectorXd theta3 = pilot.theta3();

  Eigen::VectorXd w(a.y0.size());
  for (std::size_t g = 0; g < a.gt.size(); ++g) {
    const Eigen::Index m = a.size[g];
    const Eigen::MatrixXd& gt = a.gt[g];
    const double alpha_g = pilot.alpha[static_cast<Eigen::Index>(g)];
    Eigen::VectorXd mean_rhs =
        Eigen::VectorXd::Constant(m, alpha_g) +
        a.x0.middleRows(a.offset[g], m) * theta2 +
        a.gx0.middleRows(a.offset[g], m) * theta3;
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(m, m) - theta1 * gt;
    w.segment(a.offset[g], m) = gt * system.partialPivLu().solve(mean_rhs);
  }
  if (fixed_effects) demean_by_group(a, w);
  const double fs_f = excluded_f(a.gy, a.exog, w);
  const TslsFit fit = tsls(a.y, a.gy, a.exog, w);
  return finish_estimate(net, a, fit.coef, fit.cov, fit.weak, fs_f);
}

IvmiResult ivmi_estimate(const SchoolNetwork& net, int k_max,
                         bool fixed_effects, int kappa, std::uint64_t seed,
                         double level) {
  if (kappa < 2) {
    throw OutOfRangeError("ivmi_estimate: kappa must be at least 2");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw LevelMismatchError("ivmi_estimate: level must lie in (0, 1)");
  }
  const Assembled a = assemble(net, fixed_effects);
  InstrumentSet instr = build_instruments(net, k_max);
  if (fixed_effects) demean_by_group(a, instr.z);
  std::vector<int> dropped_after;
  const Eigen::MatrixXd w =
      unit_scale(prune_columns(a.exog, instr.z, &dropped_after));
  if (w.cols() == 0) {
    throw RankDeficientError(
        "ivmi_estimate: no excluded instrument survives collinearity pruning");
  }
  Eigen::MatrixXd z(a.y.size(), a.exog.cols() + w.cols());
  z << a.exog, w;

  const IvEstimate est = iv_estimate(a.y, a.gy, a.exog, z);
  const double n = static_cast<double>(a.y.size());
  const StreamKey key{seed, 0};
  const PsiSample psi = simulate_psi(est.parts, n, kappa, key);
  const Eigen::MatrixXd var = asymptotic_variance(est.parts, psi, n);
  const double fs_f = excluded_f(a.gy, a.exog, w);

  IvmiResult result;
  result.level = level;
  result.instrument_count = w.cols();
  result.pruned_instruments =
      static_cast<long>(instr.dropped.size() + dropped_after.size());
  result.classical =
      finish_estimate(net, a, est.theta, var, est.weak_design, fs_f);
  result.ci_classical = confidence_interval(est.theta, psi, level);

  const Eigen::VectorXd theta_star =
      debias(est.theta, est.parts, psi, n, DebiasMode::kMean);
  const InfluenceParts parts_star = est.parts_at(theta_star);
  const PsiSample psi_star =
      debiased_psi(parts_star, n, kappa, key, DebiasMode::kMean);
  const Eigen::MatrixXd var_star = asymptotic_variance(parts_star, psi_star, n);
  result.debiased =
      finish_estimate(net, a, theta_star, var_star, est.weak_design, fs_f);
  result.ci_debiased = confidence_interval(theta_star, psi_star, level);
  return result;
}

double social_multiplier(double theta1) {
  if (!(std::abs(theta1) < 1.0)) {
    throw OutOfRangeError(fmt::format(
        "social_multiplier: peer effect {} is outside (-1, 1)", theta1));
  }
  return 1.0 / (1.0 - theta1);
}

double social_multiplier(const PeerEstimate& est) {
  return social_multiplier(est.theta1());
}

SchoolNetwork generate_synthetic_network(const SynthNetOptions& opt) {
  if (opt.groups < 1 || opt.covariates < 1 || opt.nodes_low < 2 ||
      opt.nodes_high < opt.nodes_low) {
    throw OutOfRangeError("generate_synthetic_network: invalid shape options");
  }
  if (!(std::abs(opt.theta1) < 1.0)) {
    throw OutOfRangeError(
        "generate_synthetic_network: |theta1| must be below 1");
  }
  Eigen::VectorXd theta2(opt.covariates);
  Eigen::VectorXd theta3(opt.covariates);
  for (int j = 0; j < opt.covariates; ++j) {
    theta2[j] = (j % 2 == 0 ? 0.5 : -0.5) / std::sqrt(1.0 + j);
    theta3[j] = 0.3 / (1.0 + j);
  }

  RngStream stream(StreamKey{opt.seed, 0x73796e746e6574ULL}, 0);
  std::vector<NetworkGroup> groups;
  groups.reserve(static_cast<std::size_t>(opt.groups));
  const long span = opt.nodes_high - opt.nodes_low + 1;
  for (int g = 0; g < opt.groups; ++g) {
    NetworkGroup group;
    group.id = fmt::format("school_{:02d}", g + 1);
    const Eigen::Index m =
        opt.nodes_low +
        std::min<long>(span - 1,
                       static_cast<long>(stream.uniform() * span));
    const double link_prob =
        std::min(1.0, opt.mean_degree / static_cast<double>(m - 1));
    group.adjacency = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i != j && stream.uniform() < link_prob) {
          group.adjacency(i, j) = 1.0;
        }
      }
    }
    group.x.resize(m, opt.covariates);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int j = 0; j < opt.covariates; ++j) group.x(i, j) = stream.normal();
    }
    const double alpha = opt.alpha_sd * stream.normal();
    Eigen::VectorXd eps(m);
    for (Eigen::Index i = 0; i < m; ++i) eps[i] = opt.noise_sd * stream.normal();

    const Eigen::MatrixXd gt = row_normalized(group.adjacency);
    const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(m, alpha) +
                                group.x * theta2 + gt * group.x * theta3 + eps;
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(m, m) - opt.theta1 * gt;
    group.y = system.partialPivLu().solve(rhs);
    groups.push_back(std::move(group));
  }
  return make_network(std::move(groups));
}

}  // namespace tsinfer
