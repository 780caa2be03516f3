#pragma once

#include "bope/rng.hpp"
#include "bope/trajectories.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

namespace bope {

inline double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Reference data-generating process.
//
//   X_{1,j} ~ N(0,1)
//   A_t ~ logging:  P(A_t = +1 | .) = expit(slope * (X_{t,1}+X_{t,2}) * A_{t-1})
//   R_t = gain * A_t + X_{t,1} + eps_t,          eps_t  ~ N(0,1)
//   X_{t+1,j} = A_t + X_{t,j} + xi_{t,j},        xi_{t,j} ~ N(0,1)
// with A_0 fixed by convention (default +1) and the deterministic target
//   pi(+1 | .) = 1{ (X_{t,1}+X_{t,2}) * A_{t-1} < 0 }.

struct DgpConfig {
  int horizon = 3;
  int n = 800;
  int covariate_dim = 2;
  double action_gain = 5.0;      // reward coefficient on the action
  int reward_covariate = 0;      // 0-based index of the covariate entering the reward
  double logging_slope = 2.0;
  int a0 = +1;
};

namespace detail {
inline double covariate_score(const HistoryView& h) {
  return h.current_covariates().sum() * static_cast<double>(h.prev_action());
}
}  // namespace detail

class DgpLoggingPolicy final : public Policy {
 public:
  explicit DgpLoggingPolicy(double slope = 2.0) : slope_(slope) {}
  double mass(int, const HistoryView& hist, int action) const override {
    const double p_plus = expit(slope_ * detail::covariate_score(hist));
    if (action == +1) return p_plus;
    if (action == -1) return 1.0 - p_plus;
    throw std::invalid_argument("dgp logging policy: actions are {-1,+1}");
  }

 private:
  double slope_;
};

class DgpTargetPolicy final : public Policy {
 public:
  bool deterministic() const override { return true; }
  double mass(int, const HistoryView& hist, int action) const override {
    const int chosen = detail::covariate_score(hist) < 0.0 ? +1 : -1;
    if (action != +1 && action != -1) {
      throw std::invalid_argument("dgp target policy: actions are {-1,+1}");
    }
    return action == chosen ? 1.0 : 0.0;
  }
};

// Variable ids within one (trajectory, step) cell of the RNG address space:
// 0..d-1 covariate noise, d the action uniform, d+1 the reward noise.
inline Dataset sample_dataset(const DgpConfig& cfg, std::uint64_t seed) {
  if (cfg.horizon < 1 || cfg.n < 1 || cfg.covariate_dim < 1) {
    throw std::invalid_argument("sample_dataset: horizon, n and covariate_dim must be >= 1");
  }
  const int d = cfg.covariate_dim;
  Dataset ds;
  ds.horizon = cfg.horizon;
  ds.covariate_dim = d;
  ds.a0 = cfg.a0;
  ds.action_sets.assign(static_cast<std::size_t>(cfg.horizon), std::vector<int>{-1, +1});
  ds.trajectories.resize(static_cast<std::size_t>(cfg.n));

  for (int i = 0; i < cfg.n; ++i) {
    Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
    tr.covariates.reserve(static_cast<std::size_t>(cfg.horizon));
    tr.actions.reserve(static_cast<std::size_t>(cfg.horizon));
    tr.rewards.reserve(static_cast<std::size_t>(cfg.horizon));
    Eigen::VectorXd x(d);
    int prev_action = cfg.a0;
    for (int t = 1; t <= cfg.horizon; ++t) {
      for (int j = 0; j < d; ++j) {
        const double z = standard_normal(derive_seed(
            seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t),
                   static_cast<std::uint64_t>(j)}));
        x[j] = (t == 1) ? z : x[j] + static_cast<double>(prev_action) + z;
      }
      const double p_plus = expit(cfg.logging_slope * x.sum() * static_cast<double>(prev_action));
      const double u = uniform01(derive_seed(
          seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t),
                 static_cast<std::uint64_t>(d)}));
      const int a = u < p_plus ? +1 : -1;
      const double eps = standard_normal(derive_seed(
          seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t),
                 static_cast<std::uint64_t>(d + 1)}));
      const double r = cfg.action_gain * static_cast<double>(a) + x[cfg.reward_covariate] + eps;

      tr.covariates.push_back(x);
      tr.actions.push_back(a);
      tr.rewards.push_back(r);
      prev_action = a;
    }
  }
  return ds;
}

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
  std::uint64_t n_rollouts = 0;
};

// Monte Carlo ground truth: mean of sum_t R_t over rollouts that follow the
// deterministic target policy, with its standard error.
inline OracleValue true_value(const DgpConfig& cfg, std::uint64_t n_rollouts, std::uint64_t seed) {
  if (n_rollouts < 1) throw std::invalid_argument("true_value: need at least one rollout");
  const int d = cfg.covariate_dim;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::uint64_t r = 0; r < n_rollouts; ++r) {
    Eigen::VectorXd x(d);
    int prev_action = cfg.a0;
    double total = 0.0;
    for (int t = 1; t <= cfg.horizon; ++t) {
      for (int j = 0; j < d; ++j) {
        const double z = standard_normal(
            derive_seed(seed, {r, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(j)}));
        x[j] = (t == 1) ? z : x[j] + static_cast<double>(prev_action) + z;
      }
      const int a = (x.sum() * static_cast<double>(prev_action) < 0.0) ? +1 : -1;
      const double eps = standard_normal(derive_seed(
          seed, {r, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(d + 1)}));
      total += cfg.action_gain * static_cast<double>(a) + x[cfg.reward_covariate] + eps;
      prev_action = a;
    }
    const double delta = total - mean;
    mean += delta / static_cast<double>(r + 1);
    m2 += delta * (total - mean);
  }
  OracleValue out;
  out.value = mean;
  out.n_rollouts = n_rollouts;
  out.se = n_rollouts > 1
               ? std::sqrt(m2 / static_cast<double>(n_rollouts - 1) / static_cast<double>(n_rollouts))
               : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Exactly enumerable two-step fixture: binary covariate, binary actions,
// tabulated dynamics. All probabilities are dyadic so enumeration, sampling
// weights and density ratios are exact in floating point.

class FixtureTablePolicy final : public Policy {
 public:
  // plus[t-1][x][k] = P(+1 | step t, covariate x, previous action index k)
  // with k = 0 for -1 and k = 1 for +1.
  FixtureTablePolicy(std::vector<std::vector<std::vector<double>>> plus, bool deterministic)
      : plus_(std::move(plus)), deterministic_(deterministic) {}

  bool deterministic() const override { return deterministic_; }

  double mass(int t, const HistoryView& hist, int action) const override {
    const int x = static_cast<int>(hist.current_covariates()[0]);
    const int k = hist.prev_action() == +1 ? 1 : 0;
    const double p_plus =
        plus_.at(static_cast<std::size_t>(t - 1)).at(static_cast<std::size_t>(x)).at(static_cast<std::size_t>(k));
    if (action == +1) return p_plus;
    if (action == -1) return 1.0 - p_plus;
    throw std::invalid_argument("fixture policy: actions are {-1,+1}");
  }

 private:
  std::vector<std::vector<std::vector<double>>> plus_;
  bool deterministic_;
};

struct ToyFixture {
  // P(x_1 = 1); transitions trans_plus[x1][a1_index] = P(x_2 = 1 | x_1, a_1).
  double p_x1 = 0.5;
  double trans_plus[2][2] = {{0.25, 0.75}, {0.5, 0.25}};
  // logging_plus[t-1][x][aprev_index], target_plus likewise.
  double logging_plus[2][2][2] = {{{0.25, 0.25}, {0.75, 0.75}},
                                  {{0.5, 0.75}, {0.75, 0.25}}};
  double target_plus[2][2][2] = {{{1.0, 1.0}, {0.0, 0.0}},
                                 {{1.0, 0.0}, {0.0, 1.0}}};
  // reward[t-1][x][a_index], deterministic.
  double reward[2][2][2] = {{{0.5, 2.0}, {-1.0, 1.5}}, {{1.0, -0.5}, {3.0, 0.25}}};
  int a0 = +1;

  static constexpr int kHorizon = 2;

  std::shared_ptr<Policy> logging_policy() const { return table_policy(logging_plus, false); }
  std::shared_ptr<Policy> target_policy() const { return table_policy(target_plus, true); }

  // Probability of one complete path under (fixture dynamics, given policy).
  double path_probability(const Policy& policy, int x1, int a1, int x2, int a2) const {
    const double px1 = x1 == 1 ? p_x1 : 1.0 - p_x1;
    const double pa1 = step_mass(policy, 1, x1, a0, a1);
    const double px2 = x2 == 1 ? trans_plus[x1][idx(a1)] : 1.0 - trans_plus[x1][idx(a1)];
    const double pa2 = step_mass(policy, 2, x2, a1, a2);
    return px1 * pa1 * px2 * pa2;
  }

  double path_return(int x1, int a1, int x2, int a2) const {
    return reward[0][x1][idx(a1)] + reward[1][x2][idx(a2)];
  }

  // Exact value sum_paths P(path) * (r_1 + r_2) under the given policy.
  double enumerate_value(const Policy& policy) const {
    double v = 0.0;
    for_each_path([&](int x1, int a1, int x2, int a2) {
      v += path_probability(policy, x1, a1, x2, a2) * path_return(x1, a1, x2, a2);
    });
    return v;
  }

  // Same value along the per-step marginal route: sum_t E[r_t].
  double enumerate_step_value(const Policy& policy, int t) const {
    double v = 0.0;
    for (int x1 = 0; x1 < 2; ++x1) {
      const double px1 = x1 == 1 ? p_x1 : 1.0 - p_x1;
      for (int a1 : {-1, +1}) {
        const double pa1 = step_mass(policy, 1, x1, a0, a1);
        if (t == 1) {
          v += px1 * pa1 * reward[0][x1][idx(a1)];
          continue;
        }
        for (int x2 = 0; x2 < 2; ++x2) {
          const double px2 = x2 == 1 ? trans_plus[x1][idx(a1)] : 1.0 - trans_plus[x1][idx(a1)];
          for (int a2 : {-1, +1}) {
            v += px1 * pa1 * px2 * step_mass(policy, 2, x2, a1, a2) * reward[1][x2][idx(a2)];
          }
        }
      }
    }
    return v;
  }

  // Expected step-t reward after history through step s, acting per `policy`
  // from step s+1 on. With s = t this is the exact outcome regression.
  double continuation_mean(const Policy& policy, int t, int x1, int a1, int x2, int a2,
                           int upto) const {
    if (t == 1) return reward[0][x1][idx(a1)];  // a1 always given when upto >= 1
    if (upto >= 2) return reward[1][x2][idx(a2)];
    double v = 0.0;
    for (int nx2 = 0; nx2 < 2; ++nx2) {
      const double px2 = nx2 == 1 ? trans_plus[x1][idx(a1)] : 1.0 - trans_plus[x1][idx(a1)];
      for (int na2 : {-1, +1}) {
        v += px2 * step_mass(policy, 2, nx2, a1, na2) * reward[1][nx2][idx(na2)];
      }
    }
    return v;
  }

  // The exact trajectory distribution under the logging policy, realized as
  // a dataset in which every path appears with multiplicity proportional to
  // its probability. Path probabilities are multiples of 1/512 by
  // construction, so the replication is exact.
  Dataset population_dataset() const {
    Dataset ds;
    ds.horizon = kHorizon;
    ds.covariate_dim = 1;
    ds.a0 = a0;
    ds.action_sets.assign(kHorizon, std::vector<int>{-1, +1});
    auto logging = logging_policy();
    constexpr double kDenom = 512.0;
    for_each_path([&](int x1, int a1, int x2, int a2) {
      const double p = path_probability(*logging, x1, a1, x2, a2);
      const double copies_f = p * kDenom;
      const auto copies = static_cast<long long>(std::llround(copies_f));
      if (std::abs(copies_f - static_cast<double>(copies)) > 1e-9) {
        throw std::logic_error("fixture: path probability is not a multiple of 1/512");
      }
      Trajectory tr;
      tr.covariates = {Eigen::VectorXd::Constant(1, static_cast<double>(x1)),
                       Eigen::VectorXd::Constant(1, static_cast<double>(x2))};
      tr.actions = {a1, a2};
      tr.rewards = {reward[0][x1][idx(a1)], reward[1][x2][idx(a2)]};
      for (long long c = 0; c < copies; ++c) ds.trajectories.push_back(tr);
    });
    return ds;
  }

  template <typename F>
  void for_each_path(F&& f) const {
    for (int x1 = 0; x1 < 2; ++x1)
      for (int a1 : {-1, +1})
        for (int x2 = 0; x2 < 2; ++x2)
          for (int a2 : {-1, +1}) f(x1, a1, x2, a2);
  }

  static int idx(int action) { return action == +1 ? 1 : 0; }

  double step_mass(const Policy& policy, int t, int x, int aprev, int action) const {
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> as;
    if (t == 2) {
      // The fixture policies only read the current covariate and previous
      // action, so the step-1 covariate slot can be arbitrary; use zero.
      xs.push_back(Eigen::VectorXd::Zero(1));
      as.push_back(aprev);
    }
    xs.push_back(Eigen::VectorXd::Constant(1, static_cast<double>(x)));
    HistoryView h{std::span<const Eigen::VectorXd>(xs.data(), xs.size()),
                  std::span<const int>(as.data(), as.size()), a0};
    return policy.mass(t, h, action);
  }

 private:
  std::shared_ptr<Policy> table_policy(const double (&plus)[2][2][2], bool det) const {
    std::vector<std::vector<std::vector<double>>> table(2);
    for (int t = 0; t < 2; ++t) {
      table[static_cast<std::size_t>(t)].assign(2, std::vector<double>(2, 0.0));
      for (int x = 0; x < 2; ++x)
        for (int k = 0; k < 2; ++k)
          table[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)][static_cast<std::size_t>(k)] =
              plus[t][x][k];
    }
    return std::make_shared<FixtureTablePolicy>(std::move(table), det);
  }
};

}  // namespace bope
