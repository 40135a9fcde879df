#include "tsinfer/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tsinfer/copula.hpp"
#include "tsinfer/ecdf.hpp"
#include "tsinfer/errors.hpp"
#include "tsinfer/second_stage.hpp"
#include "tsinfer/spline.hpp"

namespace tsinfer {

namespace {

constexpr std::uint64_t kTagGenerate = 0x6765'6e64'6174'61ULL;
constexpr std::uint64_t kTagSimulate = 0x7073'696b'6579ULL;

std::vector<double> count_design_knots() {
  std::vector<double> knots;
  for (int j = 0; j <= 20; ++j) knots.push_back(0.5 * j);
  return knots;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// CDF of a N(mu, sd^2) evaluated at t, degenerating to a unit step when the
// scale collapses (e.g. under the zero-first-stage diagnostic).
double normal_cdf_loc(double t, double mu, double sd) {
  if (sd > 0.0) return normal_cdf((t - mu) / sd);
  return t >= mu ? 1.0 : 0.0;
}

struct FittedModel {
  Eigen::VectorXd theta;
  InfluenceParts parts;
  std::function<InfluenceParts(const Eigen::VectorXd&)> parts_at;
  std::function<bool()> exhausted;
  double n = 0.0;  // observations behind the sqrt(n) scaling
};

InfluenceParts zero_correction(InfluenceParts parts) {
  const Eigen::Index dim = parts.dim;
  parts.e_draw = [dim](const StreamKey&, std::uint32_t) -> Eigen::VectorXd {
    return Eigen::VectorXd::Zero(dim);
  };
  return parts;
}

FittedModel fit_model(const McOptions& opt, RngStream& gen) {
  const DgpSpec& spec = opt.spec;
  FittedModel m;
  switch (spec.id) {
    case DgpId::kA:
    case DgpId::kB: {
      const IvData data = generate_iv(spec, gen);
      Eigen::MatrixXd z(spec.n, data.z.cols() + 1);
      z.col(0).setOnes();
      z.rightCols(data.z.cols()) = data.z;
      IvEstimate est = iv_estimate(data.y, data.d,
                                   Eigen::MatrixXd(spec.n, 0), z);
      m.theta = est.theta;
      m.parts = est.parts;
      m.parts_at = [est](const Eigen::VectorXd& v) { return est.parts_at(v); };
      m.exhausted = [] { return false; };
      m.n = static_cast<double>(spec.n);
      break;
    }
    case DgpId::kC: {
      const PoissonData data = generate_poisson(spec, gen);
      const std::vector<double> knots = count_design_knots();
      const FirstStageFit fs = spline_gam_fit(data.z.head(data.n_star),
                                              data.d.head(data.n_star), knots);
      const CubicSplineBasis basis(knots);
      const Eigen::MatrixXd design = basis.design(data.z);
      PoissonEstimate est = poisson_estimate(data.y, design, fs);
      m.theta = est.theta;
      m.parts = est.parts;
      m.parts_at = [est](const Eigen::VectorXd& v) { return est.parts_at(v); };
      m.exhausted = [] { return false; };
      m.n = static_cast<double>(spec.n);
      break;
    }
    case DgpId::kD: {
      const PanelData data = generate_panel(spec, gen);
      const GarchBundle bundle = garch_bundle_fit(data.y);
      CopulaEstimate est = copula_estimate(bundle);
      m.theta = Eigen::VectorXd::Constant(1, est.theta);
      m.parts = est.parts;
      m.parts_at = [est](const Eigen::VectorXd& v) {
        return est.parts_at(v[0]);
      };
      m.exhausted = [stats = est.stats] { return stats->exhausted(); };
      m.n = bundle.n_eff;
      break;
    }
  }
  if (opt.force_zero_fs) {
    m.parts = zero_correction(std::move(m.parts));
    m.parts_at = [inner = std::move(m.parts_at)](const Eigen::VectorXd& v) {
      return zero_correction(inner(v));
    };
  }
  return m;
}

struct RepRecord {
  bool ok = false;
  std::string error;
  Eigen::VectorXd theta_hat, theta_star_mean, theta_star_median;
  Eigen::VectorXd se, se_star;
  Eigen::VectorXd ci_lo, ci_hi, lower_hi, upper_lo;
  Eigen::VectorXd nci_lo, nci_hi, nlower_hi, nupper_lo;
  Eigen::VectorXd psi_mean;             // location of the simulated law
  Eigen::MatrixXd sketch, sketch_star;  // points x dim quantile sketches
  bool exhausted = false;
};

// Fixed-size quantile sketch of each column: enough to rebuild the CDF on
// any grid with error at most 1/points, at a fraction of the memory.
Eigen::MatrixXd quantile_sketch(const Eigen::MatrixXd& draws, int points) {
  const Eigen::Index kappa = draws.rows();
  Eigen::MatrixXd sketch(points, draws.cols());
  std::vector<double> buf(static_cast<std::size_t>(kappa));
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    for (Eigen::Index s = 0; s < kappa; ++s) buf[s] = draws(s, c);
    std::sort(buf.begin(), buf.end());
    for (int j = 0; j < points; ++j) {
      const double p = (j + 0.5) / points;
      const auto idx = std::min<Eigen::Index>(
          kappa - 1, static_cast<Eigen::Index>(std::ceil(p * kappa)) - 1);
      sketch(j, c) = buf[std::max<Eigen::Index>(idx, 0)];
    }
  }
  return sketch;
}

RepRecord run_rep(const McOptions& opt, int rep) {
  RepRecord rec;
  const StreamKey base{opt.seed, 0};
  RngStream gen(base.derived(kTagGenerate), static_cast<std::uint32_t>(rep));
  const FittedModel m = fit_model(opt, gen);
  const double n = m.n;
  const double root_n = std::sqrt(n);
  const Eigen::Index dim = m.parts.dim;

  const StreamKey psi_key =
      base.derived(kTagSimulate).derived(static_cast<std::uint64_t>(rep));
  const PsiSample psi = simulate_psi(m.parts, n, opt.kappa, psi_key);

  const double alpha = 1.0 - opt.level;
  rec.ci_lo.resize(dim);
  rec.ci_hi.resize(dim);
  rec.lower_hi.resize(dim);
  rec.upper_lo.resize(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const Eigen::VectorXd t =
        (m.theta[k] - psi.draws.col(k).array() / root_n).matrix();
    rec.ci_lo[k] = quantile(t, alpha / 2.0);
    rec.ci_hi[k] = quantile(t, 1.0 - alpha / 2.0);
    rec.lower_hi[k] = quantile(t, 1.0 - alpha);
    rec.upper_lo[k] = quantile(t, alpha);
  }

  const Eigen::MatrixXd var = asymptotic_variance(m.parts, psi, n);
  rec.se = var.diagonal().cwiseMax(0.0).cwiseSqrt();
  const boost::math::normal_distribution<> std_normal;
  const double z_two = boost::math::quantile(std_normal, 1.0 - alpha / 2.0);
  const double z_one = boost::math::quantile(std_normal, 1.0 - alpha);
  rec.nci_lo = m.theta - z_two * rec.se;
  rec.nci_hi = m.theta + z_two * rec.se;
  rec.nlower_hi = m.theta + z_one * rec.se;
  rec.nupper_lo = m.theta - z_one * rec.se;

  rec.theta_hat = m.theta;
  rec.theta_star_mean = debias(m.theta, m.parts, psi, n, DebiasMode::kMean);
  rec.theta_star_median =
      debias(m.theta, m.parts, psi, n, DebiasMode::kMedian);

  const InfluenceParts parts_star = m.parts_at(rec.theta_star_mean);
  const PsiSample psi_star =
      debiased_psi(parts_star, n, opt.kappa, psi_key, DebiasMode::kMean);
  const Eigen::MatrixXd var_star = asymptotic_variance(parts_star, psi_star, n);
  rec.se_star = var_star.diagonal().cwiseMax(0.0).cwiseSqrt();

  rec.sketch = quantile_sketch(psi.draws, opt.grid_points);
  rec.sketch_star = quantile_sketch(psi_star.draws, opt.grid_points);
  rec.psi_mean = psi.draws.colwise().mean().transpose();
  rec.exhausted = m.exhausted();
  rec.ok = true;
  return rec;
}

EstimatorStats column_stats(const Eigen::VectorXd& values, double truth) {
  EstimatorStats s;
  s.mean = values.mean();
  s.bias = s.mean - truth;
  s.sd = std::sqrt((values.array() - s.mean).square().mean());
  s.rmse = std::sqrt(s.bias * s.bias + s.sd * s.sd);
  s.mae = (values.array() - truth).abs().mean();
  return s;
}

double trapezoid_l1(const Eigen::VectorXd& t, const Eigen::VectorXd& diff) {
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < t.size(); ++i) {
    total += 0.5 * (std::abs(diff[i]) + std::abs(diff[i + 1])) *
             (t[i + 1] - t[i]);
  }
  return total;
}

const char* dgp_name(DgpId id) {
  switch (id) {
    case DgpId::kA: return "A";
    case DgpId::kB: return "B";
    case DgpId::kC: return "C";
    case DgpId::kD: return "D";
  }
  return "?";
}

}  // namespace

McResult run_mc(const McOptions& opt) {
  if (opt.reps < 2) {
    throw OutOfRangeError("run_mc: need at least 2 replications");
  }
  if (opt.kappa < 1) throw OutOfRangeError("run_mc: kappa must be positive");
  if (!(opt.level > 0.0 && opt.level < 1.0)) {
    throw LevelMismatchError("run_mc: level must lie strictly in (0, 1)");
  }
  if (opt.grid_points < 16) {
    throw OutOfRangeError("run_mc: grid needs at least 16 points");
  }

  McResult result;
  result.options = opt;
  result.theta0 = dgp_theta0(opt.spec);
  result.dim = result.theta0.size();

  std::vector<RepRecord> records(static_cast<std::size_t>(opt.reps));
  std::atomic<int> next{0};
  std::atomic<int> finished{0};
  const auto worker = [&] {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= opt.reps) break;
      auto& rec = records[static_cast<std::size_t>(r)];
      try {
        rec = run_rep(opt, r);
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
      if (opt.progress) {
        opt.progress(finished.fetch_add(1) + 1, opt.reps);
      }
    }
  };
  const int threads = std::max(1, opt.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (int r = 0; r < opt.reps; ++r) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    if (rec.ok) {
      result.rep_ids.push_back(r);
    } else {
      result.failures.push_back(fmt::format("rep {}: {}", r, rec.error));
    }
  }
  result.completed = static_cast<int>(result.rep_ids.size());
  const int failed = opt.reps - result.completed;
  if (failed * 100 >= opt.reps) {
    throw NonConvergenceError(fmt::format(
        "run_mc: {} of {} replications failed (first: {})", failed, opt.reps,
        result.failures.empty() ? "none" : result.failures.front()));
  }

  const int rr = result.completed;
  const Eigen::Index dim = result.dim;
  const auto alloc = [&](Eigen::MatrixXd& mat) { mat.resize(rr, dim); };
  alloc(result.theta_hat);
  alloc(result.theta_star_mean);
  alloc(result.theta_star_median);
  alloc(result.se_hat);
  alloc(result.ci_lower);
  alloc(result.ci_upper);
  alloc(result.lower_ci_upper);
  alloc(result.upper_ci_lower);
  alloc(result.norm_ci_lower);
  alloc(result.norm_ci_upper);
  alloc(result.norm_lower_ci_upper);
  alloc(result.norm_upper_ci_lower);
  result.exhausted.resize(static_cast<std::size_t>(rr));

  for (int i = 0; i < rr; ++i) {
    const auto& rec = records[static_cast<std::size_t>(result.rep_ids[i])];
    result.theta_hat.row(i) = rec.theta_hat;
    result.theta_star_mean.row(i) = rec.theta_star_mean;
    result.theta_star_median.row(i) = rec.theta_star_median;
    result.se_hat.row(i) = rec.se;
    result.ci_lower.row(i) = rec.ci_lo;
    result.ci_upper.row(i) = rec.ci_hi;
    result.lower_ci_upper.row(i) = rec.lower_hi;
    result.upper_ci_lower.row(i) = rec.upper_lo;
    result.norm_ci_lower.row(i) = rec.nci_lo;
    result.norm_ci_upper.row(i) = rec.nci_hi;
    result.norm_lower_ci_upper.row(i) = rec.nlower_hi;
    result.norm_upper_ci_lower.row(i) = rec.nupper_lo;
    result.exhausted[static_cast<std::size_t>(i)] = rec.exhausted ? 1 : 0;
    if (rec.exhausted) ++result.exhausted_count;
  }

  const bool normal_path = opt.spec.id == DgpId::kD;
  const double eff_n = normal_path ? static_cast<double>(opt.spec.n - 1)
                                   : static_cast<double>(opt.spec.n);
  const double root_n = std::sqrt(eff_n);

  for (Eigen::Index k = 0; k < dim; ++k) {
    result.classical.push_back(
        column_stats(result.theta_hat.col(k), result.theta0[k]));
    result.debiased_mean.push_back(
        column_stats(result.theta_star_mean.col(k), result.theta0[k]));
    result.debiased_median.push_back(
        column_stats(result.theta_star_median.col(k), result.theta0[k]));

    CoverageRates sim;
    CoverageRates norm;
    for (int i = 0; i < rr; ++i) {
      const double t0 = result.theta0[k];
      sim.two_sided += result.ci_lower(i, k) <= t0 && t0 <= result.ci_upper(i, k);
      sim.lower += t0 <= result.lower_ci_upper(i, k);
      sim.upper += result.upper_ci_lower(i, k) <= t0;
      norm.two_sided +=
          result.norm_ci_lower(i, k) <= t0 && t0 <= result.norm_ci_upper(i, k);
      norm.lower += t0 <= result.norm_lower_ci_upper(i, k);
      norm.upper += result.norm_upper_ci_lower(i, k) <= t0;
    }
    sim.two_sided /= rr;
    sim.lower /= rr;
    sim.upper /= rr;
    norm.two_sided /= rr;
    norm.lower /= rr;
    norm.upper /= rr;
    result.coverage_sim.push_back(sim);
    result.coverage_normal.push_back(norm);

    // Common grid spanning the across-replication sample of
    // sqrt(n) (theta_hat - theta0), with margin for the estimated curves.
    const Eigen::VectorXd delta =
        root_n * (result.theta_hat.col(k).array() - result.theta0[k]).matrix();
    const EmpiricalCdf f0_cdf = empirical_cdf(delta);
    double lo = delta.minCoeff();
    double hi = delta.maxCoeff();
    double range = hi - lo;
    if (range < 1e-12) range = 1.0;
    lo -= 0.15 * range;
    hi += 0.15 * range;

    CdfGrid grid;
    grid.t = Eigen::VectorXd::LinSpaced(opt.grid_points, lo, hi);
    grid.f0.resize(opt.grid_points);
    for (int j = 0; j < opt.grid_points; ++j) grid.f0[j] = f0_cdf(grid.t[j]);
    grid.hn = Eigen::VectorXd::Zero(opt.grid_points);
    grid.fn = Eigen::VectorXd::Zero(opt.grid_points);
    grid.fn_star = Eigen::VectorXd::Zero(opt.grid_points);

    for (int i = 0; i < rr; ++i) {
      const auto& rec = records[static_cast<std::size_t>(result.rep_ids[i])];
      const double sd = root_n * rec.se[k];
      for (int j = 0; j < opt.grid_points; ++j) {
        grid.hn[j] += normal_cdf_loc(grid.t[j], 0.0, sd);
      }
      if (normal_path) {
        const double sd_star = root_n * rec.se_star[k];
        for (int j = 0; j < opt.grid_points; ++j) {
          grid.fn[j] += normal_cdf_loc(grid.t[j], rec.psi_mean[k], sd);
          grid.fn_star[j] += normal_cdf_loc(grid.t[j], 0.0, sd_star);
        }
      } else {
        const int points = static_cast<int>(rec.sketch.rows());
        Eigen::Index a = 0;
        Eigen::Index b = 0;
        for (int j = 0; j < opt.grid_points; ++j) {
          while (a < points && rec.sketch(a, k) <= grid.t[j]) ++a;
          while (b < points && rec.sketch_star(b, k) <= grid.t[j]) ++b;
          grid.fn[j] += static_cast<double>(a) / points;
          grid.fn_star[j] += static_cast<double>(b) / points;
        }
      }
    }
    grid.hn /= rr;
    grid.fn /= rr;
    grid.fn_star /= rr;
    grid.w1_hn = trapezoid_l1(grid.t, grid.hn - grid.f0);
    grid.w1_fn = trapezoid_l1(grid.t, grid.fn - grid.f0);
    grid.w1_fn_star = trapezoid_l1(grid.t, grid.fn_star - grid.f0);
    result.cdf.push_back(std::move(grid));
  }
  return result;
}

std::vector<CoverageRates> coverage(const McResult& result, double level) {
  if (std::abs(level - result.options.level) > 1e-12) {
    throw LevelMismatchError(fmt::format(
        "coverage: intervals were built at level {} but {} was requested",
        result.options.level, level));
  }
  return result.coverage_sim;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void write_replications_csv(const McResult& result, const std::string& path) {
  auto out = open_out(path);
  out << "rep,coord,theta_hat,theta_star_mean,theta_star_median,se,"
         "ci_lower,ci_upper,lower_ci_upper,upper_ci_lower,"
         "norm_ci_lower,norm_ci_upper,norm_lower_ci_upper,"
         "norm_upper_ci_lower,exhausted\n";
  for (int i = 0; i < result.completed; ++i) {
    for (Eigen::Index k = 0; k < result.dim; ++k) {
      out << fmt::format(
          "{},{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},"
          "{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{}\n",
          result.rep_ids[static_cast<std::size_t>(i)], k,
          result.theta_hat(i, k), result.theta_star_mean(i, k),
          result.theta_star_median(i, k), result.se_hat(i, k),
          result.ci_lower(i, k), result.ci_upper(i, k),
          result.lower_ci_upper(i, k), result.upper_ci_lower(i, k),
          result.norm_ci_lower(i, k), result.norm_ci_upper(i, k),
          result.norm_lower_ci_upper(i, k), result.norm_upper_ci_lower(i, k),
          static_cast<int>(result.exhausted[static_cast<std::size_t>(i)]));
    }
  }
}

void write_cdf_csv(const McResult& result, const std::string& path) {
  auto out = open_out(path);
  out << "coord,t,F0,Hn,Fn,Fn_star\n";
  for (Eigen::Index k = 0; k < result.dim; ++k) {
    const CdfGrid& g = result.cdf[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < g.t.size(); ++j) {
      out << fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", k,
                         g.t[j], g.f0[j], g.hn[j], g.fn[j], g.fn_star[j]);
    }
  }
}

void write_summary_json(const McResult& result, const std::string& path) {
  nlohmann::json j;
  const McOptions& opt = result.options;
  j["options"] = {{"dgp", dgp_name(opt.spec.id)},
                  {"n", opt.spec.n},
                  {"b_multiplier", opt.spec.b_multiplier},
                  {"c_alpha", opt.spec.c_alpha},
                  {"d_series", opt.spec.d_series},
                  {"reps", opt.reps},
                  {"kappa", opt.kappa},
                  {"seed", opt.seed},
                  {"level", opt.level},
                  {"force_zero_fs", opt.force_zero_fs},
                  {"grid_points", opt.grid_points}};
  j["theta0"] = std::vector<double>(result.theta0.data(),
                                    result.theta0.data() + result.theta0.size());
  j["completed"] = result.completed;
  j["failed"] = static_cast<int>(result.failures.size());
  j["failures"] = result.failures;
  j["exhausted_count"] = result.exhausted_count;

  const auto stats_json = [](const EstimatorStats& s) {
    return nlohmann::json{{"mean", s.mean},
                          {"bias", s.bias},
                          {"sd", s.sd},
                          {"rmse", s.rmse},
                          {"mae", s.mae}};
  };
  const auto cov_json = [](const CoverageRates& c) {
    return nlohmann::json{
        {"two_sided", c.two_sided}, {"lower", c.lower}, {"upper", c.upper}};
  };
  nlohmann::json coords = nlohmann::json::array();
  for (Eigen::Index k = 0; k < result.dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    coords.push_back(
        {{"theta0", result.theta0[k]},
         {"classical", stats_json(result.classical[ks])},
         {"debiased_mean", stats_json(result.debiased_mean[ks])},
         {"debiased_median", stats_json(result.debiased_median[ks])},
         {"coverage_sim", cov_json(result.coverage_sim[ks])},
         {"coverage_normal", cov_json(result.coverage_normal[ks])},
         {"wasserstein",
          {{"hn", result.cdf[ks].w1_hn},
           {"fn", result.cdf[ks].w1_fn},
           {"fn_star", result.cdf[ks].w1_fn_star}}}});
  }
  j["coordinates"] = coords;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace tsinfer
