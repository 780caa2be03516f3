#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bope {

// One logged sequence of covariates, actions and rewards over a horizon T.
// Actions are stored as the domain's integer labels ({-1,+1} in the
// reference problem); the per-step label sets live on the Dataset.
struct Trajectory {
  std::vector<Eigen::VectorXd> covariates;  // x_1..x_T, each of dimension d
  std::vector<int> actions;                 // a_1..a_T
  std::vector<double> rewards;              // r_1..r_T

  int horizon() const { return static_cast<int>(rewards.size()); }
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  int horizon = 0;
  int covariate_dim = 0;
  std::vector<std::vector<int>> action_sets;  // sorted labels, one set per step
  // Action assumed to precede step 1, so that step-1 policies that look at
  // the previous action are well defined. Configurable per dataset.
  int a0 = +1;

  int n() const { return static_cast<int>(trajectories.size()); }

  // Index of a label within the step-t (1-based) action set, or -1.
  int action_index(int t, int label) const {
    const auto& set = action_sets.at(static_cast<std::size_t>(t - 1));
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (set[k] == label) return static_cast<int>(k);
    }
    return -1;
  }
};

// Prefix of one trajectory as seen by a policy at step t: covariates x_1..x_t
// and actions a_1..a_{t-1}, plus the dataset's pre-step-1 action convention.
struct HistoryView {
  std::span<const Eigen::VectorXd> covariates;
  std::span<const int> actions;
  int a0 = +1;

  int step() const { return static_cast<int>(covariates.size()); }
  const Eigen::VectorXd& current_covariates() const { return covariates.back(); }
  int prev_action() const { return actions.empty() ? a0 : actions.back(); }
};

inline HistoryView history_prefix(const Trajectory& traj, int t, int a0) {
  return HistoryView{
      std::span<const Eigen::VectorXd>(traj.covariates.data(), static_cast<std::size_t>(t)),
      std::span<const int>(traj.actions.data(), static_cast<std::size_t>(t - 1)), a0};
}

inline HistoryView history_prefix(const Dataset& ds, int traj, int t) {
  return history_prefix(ds.trajectories[static_cast<std::size_t>(traj)], t, ds.a0);
}

// A decision rule: probability mass over the step-t action set given the
// observed history. Implementations must be pure functions of their
// arguments; masses over a step's action set sum to one.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual bool deterministic() const { return false; }
  virtual double mass(int t, const HistoryView& hist, int action) const = 0;
};

// Checked policy evaluation. Verifies the history shape and action
// membership before delegating to the policy.
inline double policy_mass(const Policy& policy, int t,
                          std::span<const Eigen::VectorXd> x_hist, std::span<const int> a_hist,
                          int action, std::span<const int> action_set, int a0 = +1) {
  if (t < 1) throw std::invalid_argument("policy_mass: step index must be >= 1");
  if (x_hist.size() != static_cast<std::size_t>(t)) {
    throw std::invalid_argument("policy_mass: covariate history must have length t");
  }
  if (a_hist.size() != static_cast<std::size_t>(t - 1)) {
    throw std::invalid_argument("policy_mass: action history must have length t-1");
  }
  if (std::find(action_set.begin(), action_set.end(), action) == action_set.end()) {
    throw std::invalid_argument("policy_mass: action not in the step action set");
  }
  return policy.mass(t, HistoryView{x_hist, a_hist, a0}, action);
}

inline double policy_mass(const Policy& policy, const Dataset& ds, int traj, int t, int action) {
  if (t < 1 || t > ds.horizon) throw std::invalid_argument("policy_mass: step out of range");
  const auto& tr = ds.trajectories.at(static_cast<std::size_t>(traj));
  return policy_mass(policy, t,
                     std::span<const Eigen::VectorXd>(tr.covariates.data(), static_cast<std::size_t>(t)),
                     std::span<const int>(tr.actions.data(), static_cast<std::size_t>(t - 1)), action,
                     std::span<const int>(ds.action_sets[static_cast<std::size_t>(t - 1)]), ds.a0);
}

// Equal mass on every action of a fixed-size action set.
class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(int n_actions) : n_actions_(n_actions) {}
  double mass(int, const HistoryView&, int) const override { return 1.0 / n_actions_; }

 private:
  int n_actions_;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  int trajectory = -1;  // -1 for dataset-level problems
  int step = -1;        // 1-based; -1 when not step-specific
  std::string field;
  std::string reason;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Checks every Trajectory/Dataset invariant; violations are returned, never
// thrown. Pure: repeated calls on the same dataset return identical results.
inline ValidationResult validate_dataset(const Dataset& ds) {
  ValidationResult res;
  auto add = [&res](int traj, int step, const char* field, std::string reason) {
    res.violations.push_back(Violation{traj, step, field, std::move(reason)});
  };

  if (ds.trajectories.empty()) add(-1, -1, "trajectories", "dataset must contain at least one trajectory");
  if (ds.horizon < 1) add(-1, -1, "horizon", "horizon must be >= 1");
  if (ds.covariate_dim < 1) add(-1, -1, "covariate_dim", "covariate dimension must be >= 1");
  if (static_cast<int>(ds.action_sets.size()) != ds.horizon) {
    add(-1, -1, "action_sets", "need exactly one action set per step");
    return res;  // step-level checks below would index out of range
  }
  for (int t = 1; t <= ds.horizon; ++t) {
    if (ds.action_sets[static_cast<std::size_t>(t - 1)].empty()) {
      add(-1, t, "action_sets", "empty action set");
    }
  }

  for (int i = 0; i < ds.n(); ++i) {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
    const int T = ds.horizon;
    if (static_cast<int>(tr.covariates.size()) != T) {
      add(i, -1, "covariates", "expected " + std::to_string(T) + " steps, got " +
                                   std::to_string(tr.covariates.size()));
    }
    if (static_cast<int>(tr.actions.size()) != T) {
      add(i, -1, "actions", "expected " + std::to_string(T) + " steps, got " +
                                std::to_string(tr.actions.size()));
    }
    if (static_cast<int>(tr.rewards.size()) != T) {
      add(i, -1, "rewards", "expected " + std::to_string(T) + " steps, got " +
                                std::to_string(tr.rewards.size()));
    }
    const int Tc = std::min<int>(T, static_cast<int>(tr.covariates.size()));
    for (int t = 1; t <= Tc; ++t) {
      if (tr.covariates[static_cast<std::size_t>(t - 1)].size() != ds.covariate_dim) {
        add(i, t, "covariates", "covariate dimension mismatch");
      }
    }
    const int Ta = std::min<int>(T, static_cast<int>(tr.actions.size()));
    for (int t = 1; t <= Ta; ++t) {
      if (ds.action_index(t, tr.actions[static_cast<std::size_t>(t - 1)]) < 0) {
        add(i, t, "actions",
            "label " + std::to_string(tr.actions[static_cast<std::size_t>(t - 1)]) +
                " not in the step action set");
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSV ingestion / export
//
// Format: header "traj_id,t,x_1,..,x_d,action,reward"; one row per
// (trajectory, step); rows sorted by (traj_id, t) with t = 1..T contiguous.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double_field(const std::string& s, int line_no, const char* what) {
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": cannot parse " +
                             std::string(what) + " from '" + s + "'");
  }
  return v;
}

inline long long parse_int_field(const std::string& s, int line_no, const char* what) {
  long long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": cannot parse " +
                             std::string(what) + " from '" + s + "'");
  }
  return v;
}

// Shortest exact decimal form: round-trips to the same double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace detail

inline Dataset read_dataset_csv(std::istream& in, int a0 = +1) {
  Dataset ds;
  ds.a0 = a0;
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw std::runtime_error("csv line 1: missing header row");
  ++line_no;
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "traj_id" || header[1] != "t" ||
      header[header.size() - 2] != "action" || header.back() != "reward") {
    throw std::runtime_error("csv line 1: expected header traj_id,t,x_1..x_d,action,reward");
  }
  const int d = static_cast<int>(header.size()) - 4;
  for (int j = 0; j < d; ++j) {
    if (header[static_cast<std::size_t>(2 + j)] != "x_" + std::to_string(j + 1)) {
      throw std::runtime_error("csv line 1: covariate column " + std::to_string(j + 3) +
                               " must be named x_" + std::to_string(j + 1));
    }
  }
  ds.covariate_dim = d;

  long long cur_id = -1;
  int expected_t = 1;
  Trajectory cur;
  auto flush = [&]() {
    if (cur_id >= 0) {
      ds.trajectories.push_back(std::move(cur));
      cur = Trajectory{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 4) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(d + 4) + " fields, got " +
                               std::to_string(fields.size()));
    }
    const long long id = detail::parse_int_field(fields[0], line_no, "traj_id");
    const long long t = detail::parse_int_field(fields[1], line_no, "t");
    if (id != cur_id) {
      if (id < cur_id) {
        throw std::runtime_error("csv line " + std::to_string(line_no) +
                                 ": rows must be sorted by traj_id");
      }
      if (cur_id >= 0 && expected_t != static_cast<int>(cur.rewards.size()) + 1) {
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": trajectory " +
                                 std::to_string(cur_id) + " ended early");
      }
      flush();
      cur_id = id;
      expected_t = 1;
    }
    if (t != expected_t) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected t=" +
                               std::to_string(expected_t) + " for traj_id " + std::to_string(id) +
                               ", got t=" + std::to_string(t));
    }
    ++expected_t;
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) {
      x[j] = detail::parse_double_field(fields[static_cast<std::size_t>(2 + j)], line_no, "covariate");
    }
    cur.covariates.push_back(std::move(x));
    cur.actions.push_back(static_cast<int>(detail::parse_int_field(fields[static_cast<std::size_t>(d + 2)], line_no, "action")));
    cur.rewards.push_back(detail::parse_double_field(fields[static_cast<std::size_t>(d + 3)], line_no, "reward"));
  }
  flush();

  if (ds.trajectories.empty()) throw std::runtime_error("csv: no data rows");
  ds.horizon = ds.trajectories.front().horizon();
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    if (ds.trajectories[i].horizon() != ds.horizon) {
      throw std::runtime_error("csv: trajectory " + std::to_string(i) + " has horizon " +
                               std::to_string(ds.trajectories[i].horizon()) + ", expected " +
                               std::to_string(ds.horizon));
    }
  }

  // Per-step sets are each the union of labels observed anywhere, so a label
  // that happens to be missing from one step is still a valid action there.
  std::set<int> labels;
  for (const auto& tr : ds.trajectories) labels.insert(tr.actions.begin(), tr.actions.end());
  ds.action_sets.assign(static_cast<std::size_t>(ds.horizon),
                        std::vector<int>(labels.begin(), labels.end()));
  return ds;
}

inline Dataset read_dataset_csv_file(const std::string& path, int a0 = +1) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  return read_dataset_csv(in, a0);
}

inline void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "traj_id,t";
  for (int j = 1; j <= ds.covariate_dim; ++j) out << ",x_" << j;
  out << ",action,reward\n";
  for (int i = 0; i < ds.n(); ++i) {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
    for (int t = 1; t <= tr.horizon(); ++t) {
      out << i << ',' << t;
      const Eigen::VectorXd& x = tr.covariates[static_cast<std::size_t>(t - 1)];
      for (int j = 0; j < ds.covariate_dim; ++j) out << ',' << detail::format_double(x[j]);
      out << ',' << tr.actions[static_cast<std::size_t>(t - 1)] << ','
          << detail::format_double(tr.rewards[static_cast<std::size_t>(t - 1)]) << '\n';
    }
  }
}

inline void write_dataset_csv_file(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  write_dataset_csv(ds, out);
}

}  // namespace bope
