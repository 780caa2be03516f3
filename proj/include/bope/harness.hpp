#pragma once

#include "bope/estimators.hpp"
#include "bope/rng.hpp"
#include "bope/simulation.hpp"
#include "bope/trajectories.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bope {

struct OracleConfig {
  std::uint64_t n_rollouts = 1'000'000;
  std::uint64_t seed = 9001;
};

struct NamedEstimator {
  std::string name;
  EstimatorSpec spec;
};

struct ExperimentConfig {
  DgpConfig dgp;                     // horizon is overridden per run
  std::vector<int> horizons{3, 5, 7};
  int replications = 2000;
  std::vector<NamedEstimator> estimators;
  std::uint64_t master_seed = 20270101;
  OracleConfig oracle;
  std::string out_dir = "out";
  int workers = 0;  // 0 = hardware concurrency
};

struct SummaryStats {
  double rmse = 0.0;
  double bias = 0.0;
  double sd = 0.0;
};

// Bias = mean - truth; SD is the population standard deviation (divide by
// the count); RMSE = sqrt(mean squared error), so RMSE^2 = Bias^2 + SD^2 up
// to rounding.
inline SummaryStats summarize(const std::vector<double>& estimates, double truth) {
  if (estimates.empty()) throw std::invalid_argument("summarize: no estimates");
  const double n = static_cast<double>(estimates.size());
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= n;
  double var = 0.0;
  double mse = 0.0;
  for (double e : estimates) {
    var += (e - mean) * (e - mean);
    mse += (e - truth) * (e - truth);
  }
  SummaryStats s;
  s.bias = mean - truth;
  s.sd = std::sqrt(var / n);
  s.rmse = std::sqrt(mse / n);
  return s;
}

struct CellSummary {
  SummaryStats stats;
  double degenerate_fraction = 0.0;
  double mean_ess = 0.0;
  double mean_zero_fraction = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

struct ReplicationRecord {
  int horizon = 0;
  int replication = 0;
  std::string estimator;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
  double ess = std::numeric_limits<double>::quiet_NaN();
  double zero_fraction = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success
};

struct ReplicationSummary {
  std::vector<int> horizons;
  std::vector<std::string> estimator_names;
  std::vector<OracleValue> oracle;         // aligned with horizons
  std::vector<std::vector<CellSummary>> cells;  // [horizon][estimator]
};

struct ExperimentResult {
  ReplicationSummary summary;
  std::vector<ReplicationRecord> records;  // ordered by (horizon, replication, estimator)
};

// Dataset seed for one (master_seed, horizon, replication) cell; the
// documented splittable scheme used everywhere in the harness.
inline std::uint64_t replication_seed(std::uint64_t master_seed, int horizon, int replication) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(horizon),
                                   static_cast<std::uint64_t>(replication)});
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.replications < 1) throw std::invalid_argument("run_experiment: replications must be >= 1");
  if (cfg.estimators.empty()) throw std::invalid_argument("run_experiment: need at least one estimator");
  if (cfg.horizons.empty()) throw std::invalid_argument("run_experiment: need at least one horizon");

  const int n_h = static_cast<int>(cfg.horizons.size());
  const int n_e = static_cast<int>(cfg.estimators.size());
  const int n_r = cfg.replications;

  ExperimentResult result;
  result.records.resize(static_cast<std::size_t>(n_h) * n_r * n_e);

  const DgpLoggingPolicy logging(cfg.dgp.logging_slope);
  const DgpTargetPolicy target;

  // One task per (horizon, replication); every estimator sees the same
  // dataset. Records land in preassigned slots, so results are identical
  // for any worker count.
  const long long total = static_cast<long long>(n_h) * n_r;
  std::atomic<long long> next{0};
  auto worker_fn = [&]() {
    for (;;) {
      const long long task = next.fetch_add(1);
      if (task >= total) return;
      const int hi = static_cast<int>(task / n_r);
      const int r = static_cast<int>(task % n_r);
      const int horizon = cfg.horizons[static_cast<std::size_t>(hi)];

      DgpConfig dgp = cfg.dgp;
      dgp.horizon = horizon;
      const std::uint64_t seed = replication_seed(cfg.master_seed, horizon, r);
      const Dataset ds = sample_dataset(dgp, seed);

      for (int e = 0; e < n_e; ++e) {
        ReplicationRecord& rec =
            result.records[(static_cast<std::size_t>(hi) * n_r + r) * n_e + e];
        rec.horizon = horizon;
        rec.replication = r;
        rec.estimator = cfg.estimators[static_cast<std::size_t>(e)].name;
        try {
          const EvalResult ev =
              evaluate_estimator(cfg.estimators[static_cast<std::size_t>(e)].spec, ds, logging, target);
          rec.estimate = ev.value;
          rec.degenerate = ev.degenerate();
          rec.ess = ev.ess();
          rec.zero_fraction = ev.zero_fraction();
        } catch (const std::exception& ex) {
          rec.error = ex.what();
        }
      }
    }
  };

  int workers = cfg.workers > 0 ? cfg.workers
                                : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (workers == 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }

  // Oracle values and per-cell summaries.
  result.summary.horizons = cfg.horizons;
  for (const auto& e : cfg.estimators) result.summary.estimator_names.push_back(e.name);
  result.summary.cells.assign(static_cast<std::size_t>(n_h),
                              std::vector<CellSummary>(static_cast<std::size_t>(n_e)));
  for (int hi = 0; hi < n_h; ++hi) {
    DgpConfig dgp = cfg.dgp;
    dgp.horizon = cfg.horizons[static_cast<std::size_t>(hi)];
    result.summary.oracle.push_back(true_value(
        dgp, cfg.oracle.n_rollouts,
        derive_seed(cfg.oracle.seed, {static_cast<std::uint64_t>(dgp.horizon)})));
    for (int e = 0; e < n_e; ++e) {
      CellSummary& cell = result.summary.cells[static_cast<std::size_t>(hi)][static_cast<std::size_t>(e)];
      std::vector<double> estimates;
      estimates.reserve(static_cast<std::size_t>(n_r));
      double sum_deg = 0.0, sum_ess = 0.0, sum_zero = 0.0;
      for (int r = 0; r < n_r; ++r) {
        const ReplicationRecord& rec =
            result.records[(static_cast<std::size_t>(hi) * n_r + r) * n_e + e];
        if (!rec.error.empty()) {
          ++cell.n_failed;
          continue;
        }
        estimates.push_back(rec.estimate);
        sum_deg += rec.degenerate ? 1.0 : 0.0;
        sum_ess += rec.ess;
        sum_zero += rec.zero_fraction;
      }
      cell.n_ok = static_cast<int>(estimates.size());
      if (cell.n_ok > 0) {
        cell.stats = summarize(estimates, result.summary.oracle.back().value);
        cell.degenerate_fraction = sum_deg / cell.n_ok;
        cell.mean_ess = sum_ess / cell.n_ok;
        cell.mean_zero_fraction = sum_zero / cell.n_ok;
      } else {
        cell.stats = SummaryStats{std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN()};
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports: per-replication CSV, summary CSV in the rows-by-horizon-triples
// layout, and a JSON mirror of the full summary. Output is byte-stable for
// identical inputs.

inline std::string per_replication_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "horizon,replication,estimator,estimate,degenerate,ess,zero_fraction\n";
  for (const auto& rec : result.records) {
    out << rec.horizon << ',' << rec.replication << ',' << rec.estimator << ','
        << detail::format_double(rec.estimate) << ',' << (rec.degenerate ? 1 : 0) << ','
        << detail::format_double(rec.ess) << ',' << detail::format_double(rec.zero_fraction)
        << '\n';
  }
  return out.str();
}

inline std::string summary_csv(const ReplicationSummary& summary) {
  std::ostringstream out;
  out << "estimator";
  for (int h : summary.horizons) {
    out << ",rmse_T" << h << ",bias_T" << h << ",sd_T" << h;
  }
  out << '\n';
  for (std::size_t e = 0; e < summary.estimator_names.size(); ++e) {
    out << summary.estimator_names[e];
    for (std::size_t hi = 0; hi < summary.horizons.size(); ++hi) {
      const CellSummary& cell = summary.cells[hi][e];
      out << ',' << detail::format_double(cell.stats.rmse) << ','
          << detail::format_double(cell.stats.bias) << ','
          << detail::format_double(cell.stats.sd);
    }
    out << '\n';
  }
  return out.str();
}

// Parses the summary CSV back into the (horizons, estimator names, stats)
// triple grid it encodes.
inline ReplicationSummary read_summary_csv(std::istream& in) {
  ReplicationSummary s;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("summary csv: missing header");
  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "estimator") {
    throw std::runtime_error("summary csv: bad header");
  }
  if ((header.size() - 1) % 3 != 0) throw std::runtime_error("summary csv: bad header width");
  const std::size_t n_h = (header.size() - 1) / 3;
  for (std::size_t hi = 0; hi < n_h; ++hi) {
    const std::string& name = header[1 + 3 * hi];
    if (name.rfind("rmse_T", 0) != 0) throw std::runtime_error("summary csv: bad column " + name);
    s.horizons.push_back(std::stoi(name.substr(6)));
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("summary csv line " + std::to_string(line_no) + ": bad width");
    }
    s.estimator_names.push_back(fields[0]);
    for (std::size_t hi = 0; hi < n_h; ++hi) {
      if (s.cells.size() <= hi) s.cells.emplace_back();
      CellSummary cell;
      cell.stats.rmse = detail::parse_double_field(fields[1 + 3 * hi], line_no, "rmse");
      cell.stats.bias = detail::parse_double_field(fields[2 + 3 * hi], line_no, "bias");
      cell.stats.sd = detail::parse_double_field(fields[3 + 3 * hi], line_no, "sd");
      s.cells[hi].push_back(cell);
    }
  }
  return s;
}

inline nlohmann::ordered_json summary_json(const ReplicationSummary& summary,
                                           const std::vector<ReplicationRecord>& records) {
  nlohmann::ordered_json j;
  j["horizons"] = summary.horizons;
  j["estimators"] = summary.estimator_names;
  j["oracle"] = nlohmann::ordered_json::array();
  for (std::size_t hi = 0; hi < summary.horizons.size(); ++hi) {
    j["oracle"].push_back({{"horizon", summary.horizons[hi]},
                           {"value", summary.oracle[hi].value},
                           {"se", summary.oracle[hi].se},
                           {"n_rollouts", summary.oracle[hi].n_rollouts}});
  }
  j["cells"] = nlohmann::ordered_json::array();
  for (std::size_t hi = 0; hi < summary.horizons.size(); ++hi) {
    for (std::size_t e = 0; e < summary.estimator_names.size(); ++e) {
      const CellSummary& cell = summary.cells[hi][e];
      j["cells"].push_back({{"horizon", summary.horizons[hi]},
                            {"estimator", summary.estimator_names[e]},
                            {"rmse", cell.stats.rmse},
                            {"bias", cell.stats.bias},
                            {"sd", cell.stats.sd},
                            {"degenerate_fraction", cell.degenerate_fraction},
                            {"mean_ess", cell.mean_ess},
                            {"mean_zero_fraction", cell.mean_zero_fraction},
                            {"n_ok", cell.n_ok},
                            {"n_failed", cell.n_failed}});
    }
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& rec : records) {
    if (rec.error.empty()) continue;
    j["failures"].push_back({{"horizon", rec.horizon},
                             {"replication", rec.replication},
                             {"estimator", rec.estimator},
                             {"reason", rec.error}});
  }
  return j;
}

struct ReportPaths {
  std::string per_replication;
  std::string summary;
  std::string summary_json;
};

inline ReportPaths write_reports(const ExperimentResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  ReportPaths paths{out_dir + "/per_replication.csv", out_dir + "/summary.csv",
                    out_dir + "/summary.json"};
  auto write_file = [](const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << content;
    if (!out) throw std::runtime_error("failed writing output file: " + path);
  };
  write_file(paths.per_replication, per_replication_csv(result));
  write_file(paths.summary, summary_csv(result.summary));
  write_file(paths.summary_json, summary_json(result.summary, result.records).dump(2) + "\n");
  return paths;
}

// ---------------------------------------------------------------------------
// Config file: JSON with a fixed schema; unknown keys are an error.

namespace detail {

inline void require_keys(const nlohmann::json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::runtime_error(std::string("config: unknown key '") + it.key() + "' in " + where);
    }
  }
}

inline KernelSpec parse_kernel(const nlohmann::json& j) {
  require_keys(j, "kernel", {"family", "length_scale", "context_extractor", "delta_action_lags"});
  KernelSpec k = dtr_kernel();
  if (j.contains("family")) {
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "gaussian") k.family = KernelFamily::gaussian;
    else if (fam == "matern52") k.family = KernelFamily::matern52;
    else throw std::runtime_error("config: kernel family must be gaussian or matern52");
  }
  if (j.contains("length_scale")) k.length_scale = j.at("length_scale").get<double>();
  if (j.contains("context_extractor")) {
    const std::string ex = j.at("context_extractor").get<std::string>();
    if (ex == "full_covariates") k.context_extractor = ContextExtractor::full_covariates;
    else if (ex == "last_step_covariates_with_action_delta")
      k.context_extractor = ContextExtractor::last_step_covariates_with_action_delta;
    else throw std::runtime_error("config: unknown context_extractor " + ex);
  }
  if (j.contains("delta_action_lags")) k.delta_action_lags = j.at("delta_action_lags").get<int>();
  return k;
}

inline EstimatorKind parse_kind(const std::string& kind) {
  if (kind == "ipw") return EstimatorKind::ipw;
  if (kind == "ipw_T") return EstimatorKind::ipw_T;
  if (kind == "nipw") return EstimatorKind::nipw;
  if (kind == "nipw_T") return EstimatorKind::nipw_T;
  if (kind == "balanced") return EstimatorKind::balanced;
  if (kind == "balanced_dr") return EstimatorKind::balanced_dr;
  throw std::runtime_error("config: unknown estimator kind " + kind);
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::require_keys(j, "config root",
                       {"dgp", "horizons", "replications", "estimators", "master_seed", "oracle",
                        "out_dir", "workers"});
  ExperimentConfig cfg;
  if (j.contains("dgp")) {
    const auto& d = j.at("dgp");
    detail::require_keys(d, "dgp",
                         {"n", "covariate_dim", "action_gain", "reward_covariate_index",
                          "logging_slope", "a0"});
    if (d.contains("n")) cfg.dgp.n = d.at("n").get<int>();
    if (d.contains("covariate_dim")) cfg.dgp.covariate_dim = d.at("covariate_dim").get<int>();
    if (d.contains("action_gain")) cfg.dgp.action_gain = d.at("action_gain").get<double>();
    if (d.contains("reward_covariate_index"))
      cfg.dgp.reward_covariate = d.at("reward_covariate_index").get<int>();
    if (d.contains("logging_slope")) cfg.dgp.logging_slope = d.at("logging_slope").get<double>();
    if (d.contains("a0")) cfg.dgp.a0 = d.at("a0").get<int>();
  }
  if (j.contains("horizons")) cfg.horizons = j.at("horizons").get<std::vector<int>>();
  if (j.contains("replications")) cfg.replications = j.at("replications").get<int>();
  if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    detail::require_keys(o, "oracle", {"n_rollouts", "seed"});
    if (o.contains("n_rollouts")) cfg.oracle.n_rollouts = o.at("n_rollouts").get<std::uint64_t>();
    if (o.contains("seed")) cfg.oracle.seed = o.at("seed").get<std::uint64_t>();
  }
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  if (j.contains("estimators")) {
    for (const auto& ej : j.at("estimators")) {
      detail::require_keys(ej, "estimator", {"name", "kind", "kernel", "lambda"});
      NamedEstimator ne;
      ne.spec.kind = detail::parse_kind(ej.at("kind").get<std::string>());
      ne.name = ej.contains("name") ? ej.at("name").get<std::string>()
                                    : std::string(to_string(ne.spec.kind));
      if (ej.contains("kernel")) ne.spec.kernel = detail::parse_kernel(ej.at("kernel"));
      if (ej.contains("lambda")) ne.spec.lambda = ej.at("lambda").get<double>();
      cfg.estimators.push_back(std::move(ne));
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw std::runtime_error("config: " + std::string(ex.what()));
  }
  return parse_experiment_config(j);
}

}  // namespace bope
