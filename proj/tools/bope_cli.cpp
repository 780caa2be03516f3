// Command-line front end: run replication experiments, simulate datasets,
// evaluate estimators on ingested data, and query the ground-truth oracle.

#include "bope/bope.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

bope::KernelFamily parse_family(const std::string& name) {
  if (name == "gaussian") return bope::KernelFamily::gaussian;
  if (name == "matern52") return bope::KernelFamily::matern52;
  throw CLI::ValidationError("--kernel must be gaussian or matern52");
}

std::vector<bope::NamedEstimator> build_estimators(const std::vector<std::string>& tokens,
                                                   bope::KernelFamily family, double lambda) {
  std::vector<bope::NamedEstimator> out;
  for (const std::string& tok : tokens) {
    bope::NamedEstimator ne;
    ne.name = tok;
    if (tok == "ipw") ne.spec.kind = bope::EstimatorKind::ipw;
    else if (tok == "ipw_T") ne.spec.kind = bope::EstimatorKind::ipw_T;
    else if (tok == "nipw") ne.spec.kind = bope::EstimatorKind::nipw;
    else if (tok == "nipw_T") ne.spec.kind = bope::EstimatorKind::nipw_T;
    else if (tok == "balanced" || tok == "balanced_dr") {
      ne.spec.kind = tok == "balanced" ? bope::EstimatorKind::balanced
                                       : bope::EstimatorKind::balanced_dr;
      ne.spec.kernel = bope::dtr_kernel(family);
      ne.spec.lambda = lambda;
    } else {
      throw CLI::ValidationError("unknown estimator '" + tok + "'");
    }
    out.push_back(std::move(ne));
  }
  return out;
}

std::shared_ptr<bope::Policy> named_policy(const std::string& name, double logging_slope) {
  if (name == "dgp_target") return std::make_shared<bope::DgpTargetPolicy>();
  if (name == "dgp_logging") return std::make_shared<bope::DgpLoggingPolicy>(logging_slope);
  if (name == "uniform") return std::make_shared<bope::UniformPolicy>(2);
  throw CLI::ValidationError("unknown policy '" + name + "' (dgp_target|dgp_logging|uniform)");
}

void print_summary_table(const bope::ReplicationSummary& s) {
  std::cout << "estimator";
  for (int h : s.horizons) std::cout << "  | T=" << h << ": rmse bias sd";
  std::cout << "\n";
  for (std::size_t e = 0; e < s.estimator_names.size(); ++e) {
    std::cout << s.estimator_names[e];
    for (std::size_t hi = 0; hi < s.horizons.size(); ++hi) {
      const auto& c = s.cells[hi][e];
      std::cout << "  | " << c.stats.rmse << " " << c.stats.bias << " " << c.stats.sd;
    }
    std::cout << "\n";
  }
  for (std::size_t hi = 0; hi < s.horizons.size(); ++hi) {
    std::cout << "oracle T=" << s.horizons[hi] << ": " << s.oracle[hi].value << " +/- "
              << s.oracle[hi].se << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced off-policy evaluation of treatment regimes"};
  app.require_subcommand(1);

  // --- run ---
  auto* run = app.add_subcommand("run", "Run a replication experiment");
  std::string run_config;
  std::vector<int> run_horizons;
  int run_n = 0;
  int run_reps = 0;
  std::int64_t run_seed = -1;
  std::vector<std::string> run_estimators;
  std::string run_kernel = "gaussian";
  double run_lambda = 1.0;
  std::string run_out;
  int run_workers = -1;
  run->add_option("--config", run_config, "JSON experiment config");
  run->add_option("--horizon", run_horizons, "Horizon(s) T, repeatable");
  run->add_option("--n", run_n, "Trajectories per replication");
  run->add_option("--replications", run_reps, "Number of replications");
  run->add_option("--seed", run_seed, "Master seed");
  run->add_option("--estimators", run_estimators,
                  "Estimators: ipw,ipw_T,nipw,nipw_T,balanced,balanced_dr")
      ->delimiter(',');
  run->add_option("--kernel", run_kernel, "Kernel for balanced estimators")
      ->check(CLI::IsMember({"gaussian", "matern52"}));
  run->add_option("--lambda", run_lambda, "Regularization for balanced estimators");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--workers", run_workers, "Worker threads (0 = hardware)");

  // --- simulate ---
  auto* sim = app.add_subcommand("simulate", "Sample a dataset and write it as CSV");
  int sim_horizon = 3;
  int sim_n = 800;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  sim->add_option("--horizon", sim_horizon, "Horizon T");
  sim->add_option("--n", sim_n, "Number of trajectories");
  sim->add_option("--seed", sim_seed, "Dataset seed");
  sim->add_option("--out", sim_out, "Output CSV path")->required();

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "Run estimators on a dataset CSV");
  std::string ev_data;
  std::vector<std::string> ev_estimators{"ipw", "nipw_T", "balanced"};
  std::string ev_target = "dgp_target";
  std::string ev_logging = "dgp_logging";
  std::string ev_kernel = "gaussian";
  double ev_lambda = 1.0;
  int ev_a0 = +1;
  ev->add_option("--data", ev_data, "Dataset CSV")->required();
  ev->add_option("--estimators", ev_estimators, "Estimators to run")->delimiter(',');
  ev->add_option("--target", ev_target, "Built-in target policy");
  ev->add_option("--logging", ev_logging, "Built-in logging policy (IPW kinds)");
  ev->add_option("--kernel", ev_kernel, "Kernel for balanced estimators")
      ->check(CLI::IsMember({"gaussian", "matern52"}));
  ev->add_option("--lambda", ev_lambda, "Regularization for balanced estimators");
  ev->add_option("--a0", ev_a0, "Pre-step-1 action convention");

  // --- oracle ---
  auto* orc = app.add_subcommand("oracle", "Ground-truth value of the target policy");
  int orc_horizon = 3;
  std::uint64_t orc_rollouts = 1'000'000;
  std::uint64_t orc_seed = 9001;
  orc->add_option("--horizon", orc_horizon, "Horizon T");
  orc->add_option("--n-rollouts", orc_rollouts, "Monte Carlo rollouts");
  orc->add_option("--seed", orc_seed, "Rollout seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      bope::ExperimentConfig cfg;
      cfg.replications = 500;
      if (!run_config.empty()) cfg = bope::load_experiment_config(run_config);
      if (!run_horizons.empty()) cfg.horizons = run_horizons;
      if (run_n > 0) cfg.dgp.n = run_n;
      if (run_reps > 0) cfg.replications = run_reps;
      if (run_seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(run_seed);
      if (!run_estimators.empty() || cfg.estimators.empty()) {
        std::vector<std::string> tokens = run_estimators;
        if (tokens.empty()) tokens = {"ipw", "ipw_T", "nipw", "nipw_T", "balanced"};
        cfg.estimators = build_estimators(tokens, parse_family(run_kernel), run_lambda);
      }
      if (!run_out.empty()) cfg.out_dir = run_out;
      if (run_workers >= 0) cfg.workers = run_workers;

      const bope::ExperimentResult result = bope::run_experiment(cfg);
      const bope::ReportPaths paths = bope::write_reports(result, cfg.out_dir);
      print_summary_table(result.summary);
      std::cout << "reports: " << paths.per_replication << ", " << paths.summary << ", "
                << paths.summary_json << "\n";
    } else if (sim->parsed()) {
      bope::DgpConfig dgp;
      dgp.horizon = sim_horizon;
      dgp.n = sim_n;
      const bope::Dataset ds = bope::sample_dataset(dgp, sim_seed);
      bope::write_dataset_csv_file(ds, sim_out);
      std::cout << "wrote " << ds.n() << " trajectories (T=" << ds.horizon << ") to " << sim_out
                << "\n";
    } else if (ev->parsed()) {
      const bope::Dataset ds = bope::read_dataset_csv_file(ev_data, ev_a0);
      const auto validation = bope::validate_dataset(ds);
      if (!validation.ok()) {
        std::cerr << "invalid dataset:";
        for (const auto& v : validation.violations) {
          std::cerr << "\n  trajectory " << v.trajectory << " step " << v.step << " ["
                    << v.field << "]: " << v.reason;
        }
        std::cerr << "\n";
        return 1;
      }
      auto target = named_policy(ev_target, 2.0);
      auto logging = named_policy(ev_logging, 2.0);
      const auto estimators =
          build_estimators(ev_estimators, parse_family(ev_kernel), ev_lambda);
      for (const auto& ne : estimators) {
        const bope::EvalResult res = bope::evaluate_estimator(ne.spec, ds, *logging, *target);
        std::cout << ne.name << ": value=" << res.value << " per_step=[";
        for (std::size_t t = 0; t < res.per_step_values.size(); ++t) {
          std::cout << (t ? "," : "") << res.per_step_values[t];
        }
        std::cout << "] ess=" << res.ess() << " zero_fraction=" << res.zero_fraction()
                  << (res.degenerate() ? " degenerate" : "") << "\n";
      }
    } else if (orc->parsed()) {
      bope::DgpConfig dgp;
      dgp.horizon = orc_horizon;
      const bope::OracleValue v = bope::true_value(dgp, orc_rollouts, orc_seed);
      std::cout << "value=" << v.value << " se=" << v.se << " n_rollouts=" << v.n_rollouts
                << "\n";
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
