// Command-line front end: Monte Carlo studies of the built-in designs and
// peer-effects estimation on edge-list data.  Standard output carries only
// machine-readable summaries; progress goes to standard error.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <typeinfo>
#include <vector>

#include <CLI11.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cxxabi.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tsinfer/errors.hpp"
#include "tsinfer/io.hpp"
#include "tsinfer/mc.hpp"
#include "tsinfer/network.hpp"

namespace {

using nlohmann::json;

std::string error_type_name(const std::exception& e) {
  int status = 0;
  std::unique_ptr<char, void (*)(void*)> demangled(
      abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status),
      std::free);
  std::string name = (status == 0 && demangled) ? demangled.get()
                                                : typeid(e).name();
  const std::string ns = "tsinfer::";
  if (name.rfind(ns, 0) == 0) name = name.substr(ns.size());
  return name;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw tsinfer::Error(
        fmt::format("cannot open '{}' for writing", path.string()));
  }
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---------------------------------------------------------------------------
// mc subcommand

struct McCli {
  std::string dgp;
  long n = 250;
  int reps = 1000;
  int kappa = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  int kn_mult = 2;
  std::string debias = "mean";
  std::string out = ".";
  int threads = 0;
  bool force_zero_fs = false;
  int grid_points = 512;
};

tsinfer::DgpId parse_dgp(const std::string& name) {
  if (name == "A" || name == "a") return tsinfer::DgpId::kA;
  if (name == "B" || name == "b") return tsinfer::DgpId::kB;
  if (name == "C" || name == "c") return tsinfer::DgpId::kC;
  if (name == "D" || name == "d") return tsinfer::DgpId::kD;
  throw tsinfer::OutOfRangeError(
      fmt::format("unknown design '{}'; expected A, B, C or D", name));
}

void write_estimator_csv(const tsinfer::McResult& result,
                         const std::string& debias,
                         const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "coord,estimator,mean,bias,sd,rmse,mae\n";
  const auto row = [&](Eigen::Index k, const char* name,
                       const tsinfer::EstimatorStats& s) {
    out << fmt::format("{},{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n",
                       k + 1, name, s.mean, s.bias, s.sd, s.rmse, s.mae);
  };
  for (Eigen::Index k = 0; k < result.dim; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    row(k, "classical", result.classical[idx]);
    if (debias != "off") {
      row(k, "debiased_mean", result.debiased_mean[idx]);
      row(k, "debiased_median", result.debiased_median[idx]);
    }
  }
}

void write_coverage_csv(const tsinfer::McResult& result,
                        const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "coord,method,level,two_sided,lower,upper\n";
  const auto row = [&](Eigen::Index k, const char* method,
                       const tsinfer::CoverageRates& c) {
    out << fmt::format("{},{},{:.12g},{:.12g},{:.12g},{:.12g}\n", k + 1,
                       method, result.options.level, c.two_sided, c.lower,
                       c.upper);
  };
  for (Eigen::Index k = 0; k < result.dim; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    row(k, "sim", result.coverage_sim[idx]);
    row(k, "normal", result.coverage_normal[idx]);
  }
}

int cmd_mc(const McCli& cli) {
  tsinfer::McOptions opt;
  opt.spec = tsinfer::make_dgp_spec(parse_dgp(cli.dgp), cli.n, cli.kn_mult);
  opt.reps = cli.reps;
  opt.kappa = cli.kappa;
  opt.seed = cli.seed;
  opt.level = cli.level;
  opt.threads = cli.threads > 0
                    ? cli.threads
                    : static_cast<int>(
                          std::max(1u, std::thread::hardware_concurrency()));
  opt.force_zero_fs = cli.force_zero_fs;
  opt.grid_points = cli.grid_points;

  const int step = std::max(1, cli.reps / 20);
  std::atomic<int> last_reported{0};
  opt.progress = [&](int done, int total) {
    if (done % step == 0 || done == total) {
      int prev = last_reported.load();
      while (done > prev &&
             !last_reported.compare_exchange_weak(prev, done)) {
      }
      if (done > prev || done == total) {
        fmt::print(stderr, "[mc] {}/{} replications\n", done, total);
      }
    }
  };

  fmt::print(stderr, "[mc] design {} n={} reps={} kappa={} seed={}\n", cli.dgp,
             cli.n, cli.reps, cli.kappa, cli.seed);
  const tsinfer::McResult result = tsinfer::run_mc(opt);

  const std::filesystem::path dir(cli.out);
  std::filesystem::create_directories(dir);
  tsinfer::write_replications_csv(result, (dir / "replications.csv").string());
  tsinfer::write_cdf_csv(result, (dir / "cdf.csv").string());
  tsinfer::write_summary_json(result, (dir / "summary.json").string());
  write_estimator_csv(result, cli.debias, dir / "summary.csv");
  write_coverage_csv(result, dir / "coverage.csv");

  fmt::print(stderr, "[mc] wrote {}\n", dir.string());
  fmt::print("{}", slurp(dir / "summary.json"));
  return 0;
}

// ---------------------------------------------------------------------------
// peer subcommand

struct PeerCli {
  std::string edges;
  std::string attrs;
  std::string outcome = "outcome";
  int kmax = 9;
  bool fixed_effects = false;
  std::string method = "ivmi";
  int kappa = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  std::string out = ".";
};

std::vector<std::string> coefficient_names(const tsinfer::PeerEstimate& est) {
  std::vector<std::string> names;
  names.emplace_back("theta1");
  for (Eigen::Index j = 0; j < est.n_covariates; ++j) {
    names.push_back(fmt::format("x{}", j + 1));
  }
  for (Eigen::Index j = 0; j < est.n_covariates; ++j) {
    names.push_back(fmt::format("peer_x{}", j + 1));
  }
  if (!est.fixed_effects) names.emplace_back("intercept");
  return names;
}

int cmd_peer(const PeerCli& cli) {
  tsinfer::NetworkCsvOptions csv_opt;
  csv_opt.outcome_column = cli.outcome;
  fmt::print(stderr, "[peer] reading {} and {}\n", cli.edges, cli.attrs);
  const tsinfer::SchoolNetwork net =
      tsinfer::read_network_csv(cli.edges, cli.attrs, csv_opt);
  fmt::print(stderr, "[peer] {} groups, {} nodes, {} covariates\n",
             net.groups.size(), net.total_nodes(), net.covariates());

  tsinfer::PeerEstimate est;
  Eigen::MatrixXd ci;  // coef rows x (lower, upper)
  json extra;
  if (cli.method == "ols") {
    est = tsinfer::ols_estimate(net, cli.fixed_effects);
  } else if (cli.method == "civ") {
    est = tsinfer::civ_estimate(net, cli.fixed_effects);
  } else if (cli.method == "oiv") {
    const tsinfer::PeerEstimate pilot =
        tsinfer::civ_estimate(net, cli.fixed_effects);
    est = tsinfer::oiv_estimate(net, pilot, cli.fixed_effects);
    extra["pilot_theta1"] = pilot.theta1();
  } else if (cli.method == "ivmi" || cli.method == "divmi") {
    const tsinfer::IvmiResult r = tsinfer::ivmi_estimate(
        net, cli.kmax, cli.fixed_effects, cli.kappa, cli.seed, cli.level);
    extra["instrument_count"] = static_cast<long>(r.instrument_count);
    extra["pruned_instruments"] = r.pruned_instruments;
    extra["classical_theta1"] = r.classical.theta1();
    extra["debiased_theta1"] = r.debiased.theta1();
    if (cli.method == "ivmi") {
      est = r.classical;
      ci = r.ci_classical;
    } else {
      est = r.debiased;
      ci = r.ci_debiased;
    }
  } else {
    throw tsinfer::OutOfRangeError(fmt::format(
        "unknown method '{}'; expected ols, civ, oiv, ivmi or divmi",
        cli.method));
  }
  if (ci.size() == 0) {
    // Normal-approximation intervals for the non-simulated methods.
    const boost::math::normal_distribution<> norm;
    const double z = boost::math::quantile(norm, 0.5 + cli.level / 2.0);
    ci.resize(est.coef.size(), 2);
    for (Eigen::Index j = 0; j < est.coef.size(); ++j) {
      const double se = std::sqrt(std::max(0.0, est.cov(j, j)));
      ci(j, 0) = est.coef[j] - z * se;
      ci(j, 1) = est.coef[j] + z * se;
    }
  }

  const std::vector<std::string> names = coefficient_names(est);
  const std::filesystem::path dir(cli.out);
  std::filesystem::create_directories(dir);

  {
    std::ofstream out = open_out(dir / "coefficients.csv");
    out << "name,estimate,se,ci_lower,ci_upper\n";
    for (Eigen::Index j = 0; j < est.coef.size(); ++j) {
      out << fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g}\n",
                         names[static_cast<std::size_t>(j)], est.coef[j],
                         std::sqrt(std::max(0.0, est.cov(j, j))), ci(j, 0),
                         ci(j, 1));
    }
  }

  json report;
  report["method"] = cli.method;
  report["fixed_effects"] = cli.fixed_effects;
  report["outcome"] = cli.outcome;
  report["groups"] = net.groups.size();
  report["nodes"] = static_cast<long>(net.total_nodes());
  report["covariates"] = static_cast<long>(net.covariates());
  report["isolates"] = est.isolates;
  report["level"] = cli.level;
  report["theta1"] = est.theta1();
  report["theta1_se"] = est.theta1_se();
  report["theta1_ci"] = {ci(0, 0), ci(0, 1)};
  report["first_stage_f"] = est.first_stage_f;
  report["weak_design"] = est.weak_design;
  if (std::abs(est.theta1()) < 1.0) {
    report["social_multiplier"] = tsinfer::social_multiplier(est);
  } else {
    report["social_multiplier"] = nullptr;
  }
  if (cli.method == "ivmi" || cli.method == "divmi") {
    report["kmax"] = cli.kmax;
    report["kappa"] = cli.kappa;
    report["seed"] = cli.seed;
  }
  for (auto& [key, value] : extra.items()) report[key] = value;
  json coefficients = json::array();
  for (Eigen::Index j = 0; j < est.coef.size(); ++j) {
    coefficients.push_back(
        {{"name", names[static_cast<std::size_t>(j)]},
         {"estimate", est.coef[j]},
         {"se", std::sqrt(std::max(0.0, est.cov(j, j)))},
         {"ci_lower", ci(j, 0)},
         {"ci_upper", ci(j, 1)}});
  }
  report["coefficients"] = coefficients;

  {
    std::ofstream out = open_out(dir / "report.json");
    out << report.dump(2) << '\n';
  }
  fmt::print(stderr, "[peer] wrote {}\n", dir.string());
  fmt::print("{}\n", report.dump(2));
  return 0;
}

// ---------------------------------------------------------------------------
// synth-net subcommand

struct SynthCli {
  std::string out_edges = "synth_edges.csv";
  std::string out_attrs = "synth_attrs.csv";
  tsinfer::SynthNetOptions opt;
};

int cmd_synth(const SynthCli& cli) {
  const tsinfer::SchoolNetwork net = tsinfer::generate_synthetic_network(cli.opt);
  tsinfer::write_network_csv(net, cli.out_edges, cli.out_attrs);
  fmt::print(stderr, "[synth-net] wrote {} and {}\n", cli.out_edges,
             cli.out_attrs);
  json summary;
  summary["groups"] = net.groups.size();
  summary["nodes"] = static_cast<long>(net.total_nodes());
  summary["covariates"] = static_cast<long>(net.covariates());
  summary["theta1"] = cli.opt.theta1;
  summary["seed"] = cli.opt.seed;
  summary["edges_path"] = cli.out_edges;
  summary["attrs_path"] = cli.out_attrs;
  fmt::print("{}\n", summary.dump(2));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Simulation-based inference for two-stage estimators: Monte Carlo "
      "studies of the built-in designs and network peer-effects estimation."};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read option defaults from a TOML/INI file (command-line "
                 "flags take precedence)");
  app.allow_config_extras(false);

  McCli mc;
  CLI::App* mc_app =
      app.add_subcommand("mc", "Run a Monte Carlo study of a built-in design");
  mc_app->add_option("--dgp", mc.dgp, "Design: A, B, C or D")->required();
  mc_app->add_option("--n", mc.n, "Sample size per replication");
  mc_app->add_option("--reps", mc.reps, "Number of replications");
  mc_app->add_option("--kappa", mc.kappa, "Simulation draws per replication");
  mc_app->add_option("--seed", mc.seed, "Master seed");
  mc_app->add_option("--level", mc.level, "Confidence level");
  mc_app->add_option("--kn-mult", mc.kn_mult,
                     "Design B instrument-count multiplier (2 or 4)");
  mc_app->add_option("--debias", mc.debias,
                     "Corrected columns in summary.csv: mean, median or off")
      ->check(CLI::IsMember({"mean", "median", "off"}));
  mc_app->add_option("--out", mc.out, "Output directory");
  mc_app->add_option("--threads", mc.threads,
                     "Worker threads (0 = all cores); results are identical "
                     "for any value");
  mc_app->add_flag("--force-zero-fs", mc.force_zero_fs,
                   "Diagnostic: treat the first stage as exact");
  mc_app->add_option("--grid-points", mc.grid_points,
                     "Resolution of the distribution grids");

  PeerCli peer;
  CLI::App* peer_app = app.add_subcommand(
      "peer", "Estimate network peer effects from edge/attribute CSVs");
  peer_app->alias("estimate");
  peer_app->add_option("--edges", peer.edges, "Edge list CSV")->required();
  peer_app->add_option("--attrs", peer.attrs, "Node attribute CSV")->required();
  peer_app->add_option("--outcome", peer.outcome,
                       "Name of the outcome column in the attribute file");
  peer_app->add_option("--kmax", peer.kmax,
                       "Highest extra power of the adjacency matrix used to "
                       "build instruments");
  peer_app->add_flag("--fixed-effects", peer.fixed_effects,
                     "Group fixed effects (within-group demeaning)");
  peer_app->add_option("--method", peer.method,
                       "ols, civ, oiv, ivmi or divmi")
      ->check(CLI::IsMember({"ols", "civ", "oiv", "ivmi", "divmi"}));
  peer_app->add_option("--kappa", peer.kappa,
                       "Simulation draws (ivmi/divmi)");
  peer_app->add_option("--seed", peer.seed, "Master seed (ivmi/divmi)");
  peer_app->add_option("--level", peer.level, "Confidence level");
  peer_app->add_option("--out", peer.out, "Output directory");

  SynthCli synth;
  CLI::App* synth_app = app.add_subcommand(
      "synth-net", "Generate a synthetic grouped school network");
  synth_app->add_option("--out-edges", synth.out_edges, "Edge list CSV path");
  synth_app->add_option("--out-attrs", synth.out_attrs,
                        "Node attribute CSV path");
  synth_app->add_option("--seed", synth.opt.seed, "Master seed");
  synth_app->add_option("--groups", synth.opt.groups, "Number of groups");
  synth_app->add_option("--nodes-low", synth.opt.nodes_low,
                        "Smallest group size");
  synth_app->add_option("--nodes-high", synth.opt.nodes_high,
                        "Largest group size");
  synth_app->add_option("--covariates", synth.opt.covariates,
                        "Covariates per node");
  synth_app->add_option("--theta1", synth.opt.theta1, "Peer effect");
  synth_app->add_option("--mean-degree", synth.opt.mean_degree,
                        "Expected out-degree");
  synth_app->add_option("--alpha-sd", synth.opt.alpha_sd,
                        "Group intercept spread");
  synth_app->add_option("--noise-sd", synth.opt.noise_sd,
                        "Idiosyncratic noise spread");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mc_app->parsed()) return cmd_mc(mc);
    if (peer_app->parsed()) return cmd_peer(peer);
    if (synth_app->parsed()) return cmd_synth(synth);
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"type", error_type_name(e)}, {"message", e.what()}};
    fmt::print("{}\n", err.dump(2));
    return 1;
  }
  return 0;
}
