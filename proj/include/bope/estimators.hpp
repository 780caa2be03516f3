#pragma once

#include "bope/balance.hpp"
#include "bope/kernels.hpp"
#include "bope/trajectories.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bope {

class PositivityError : public std::runtime_error {
 public:
  PositivityError(int trajectory, int step)
      : std::runtime_error("positivity violation: logging mass ~ 0 at trajectory " +
                           std::to_string(trajectory) + ", step " + std::to_string(step)),
        trajectory_(trajectory),
        step_(step) {}
  int trajectory() const { return trajectory_; }
  int step() const { return step_; }

 private:
  int trajectory_;
  int step_;
};

enum class EstimatorKind { ipw, ipw_T, nipw, nipw_T, balanced, balanced_dr };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ipw: return "ipw";
    case EstimatorKind::ipw_T: return "ipw_T";
    case EstimatorKind::nipw: return "nipw";
    case EstimatorKind::nipw_T: return "nipw_T";
    case EstimatorKind::balanced: return "balanced";
    case EstimatorKind::balanced_dr: return "balanced_dr";
  }
  return "?";
}

struct StepDiagnostics {
  double zero_fraction = 0.0;  // share of the weights applied at this step below 1e-6
  double max_weight = 0.0;
  bool degenerate = false;     // normalization fell back to uniform weights
};

struct EvalResult {
  double value = 0.0;
  std::vector<double> per_step_values;
  std::vector<StepDiagnostics> step_diagnostics;
  std::vector<BalanceSolution> balance_steps;  // balanced kinds only
  Eigen::VectorXd final_weights;               // weights applied at the last step

  bool degenerate() const {
    for (const auto& d : step_diagnostics)
      if (d.degenerate) return true;
    return false;
  }
  // Kish effective sample size of the final-step weights.
  double ess() const {
    const double sw = final_weights.sum();
    const double sw2 = final_weights.squaredNorm();
    return sw2 > 0.0 ? sw * sw / sw2 : 0.0;
  }
  double zero_fraction() const {
    if (final_weights.size() == 0) return 0.0;
    return static_cast<double>((final_weights.array() < 1e-6).count()) /
           static_cast<double>(final_weights.size());
  }
};

namespace detail {

inline StepDiagnostics weight_diagnostics(const Eigen::VectorXd& w, bool degenerate) {
  StepDiagnostics d;
  d.zero_fraction = static_cast<double>((w.array() < 1e-6).count()) /
                    static_cast<double>(w.size());
  d.max_weight = w.maxCoeff();
  d.degenerate = degenerate;
  return d;
}

inline Eigen::VectorXd step_rewards(const Dataset& ds, int t) {
  Eigen::VectorXd r(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    r[i] = ds.trajectories[static_cast<std::size_t>(i)].rewards[static_cast<std::size_t>(t - 1)];
  }
  return r;
}

}  // namespace detail

// Per-unit density ratio at step t: target mass over logging mass at the
// observed action, given the observed history.
inline Eigen::VectorXd density_ratios(const Dataset& ds, const Policy& logging,
                                      const Policy& target, int t) {
  if (t < 1 || t > ds.horizon) throw std::invalid_argument("density_ratios: step out of range");
  Eigen::VectorXd rho(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
    const HistoryView h = history_prefix(ds, i, t);
    const int a = tr.actions[static_cast<std::size_t>(t - 1)];
    const double p0 = logging.mass(t, h, a);
    if (p0 <= 1e-12) throw PositivityError(i, t);
    rho[i] = target.mass(t, h, a) / p0;
  }
  return rho;
}

// Per-step IPW: V_t = mean( prod_{s<=t} rho_s * R_t ), summed over t.
// Ratios past step t are superfluous for the step-t average and only add
// variance, so they are not included.
inline EvalResult ipw_value(const Dataset& ds, const Policy& logging, const Policy& target) {
  const int n = ds.n();
  EvalResult res;
  Eigen::VectorXd cum = Eigen::VectorXd::Ones(n);
  for (int t = 1; t <= ds.horizon; ++t) {
    cum = cum.cwiseProduct(density_ratios(ds, logging, target, t));
    const double vt = cum.cwiseProduct(detail::step_rewards(ds, t)).mean();
    res.per_step_values.push_back(vt);
    res.value += vt;
    res.step_diagnostics.push_back(detail::weight_diagnostics(cum, false));
  }
  res.final_weights = cum;
  return res;
}

// Full-horizon IPW: the T-step product weights applied to every step's reward.
inline EvalResult ipw_T_value(const Dataset& ds, const Policy& logging, const Policy& target) {
  const int n = ds.n();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (int t = 1; t <= ds.horizon; ++t) w = w.cwiseProduct(density_ratios(ds, logging, target, t));
  EvalResult res;
  for (int t = 1; t <= ds.horizon; ++t) {
    const double vt = w.cwiseProduct(detail::step_rewards(ds, t)).mean();
    res.per_step_values.push_back(vt);
    res.value += vt;
    res.step_diagnostics.push_back(detail::weight_diagnostics(w, false));
  }
  res.final_weights = w;
  return res;
}

// Hajek-normalized IPW. Per step, the cumulative-product weights are
// normalized to mean one; with full_horizon set, the T-step product is
// normalized once and applied to every step. When all raw weights at a
// normalization point are ~ zero the estimator falls back to uniform
// weights and flags the step as degenerate.
inline EvalResult nipw_value(const Dataset& ds, const Policy& logging, const Policy& target,
                             bool full_horizon) {
  const int n = ds.n();
  EvalResult res;
  auto normalize = [n](const Eigen::VectorXd& raw, bool& degenerate) {
    if (raw.maxCoeff() <= 1e-12) {
      degenerate = true;
      return Eigen::VectorXd::Ones(n).eval();
    }
    degenerate = false;
    return (raw / raw.mean()).eval();
  };

  if (full_horizon) {
    Eigen::VectorXd raw = Eigen::VectorXd::Ones(n);
    for (int t = 1; t <= ds.horizon; ++t) {
      raw = raw.cwiseProduct(density_ratios(ds, logging, target, t));
    }
    bool degenerate = false;
    const Eigen::VectorXd w = normalize(raw, degenerate);
    for (int t = 1; t <= ds.horizon; ++t) {
      const double vt = w.cwiseProduct(detail::step_rewards(ds, t)).mean();
      res.per_step_values.push_back(vt);
      res.value += vt;
      res.step_diagnostics.push_back(detail::weight_diagnostics(w, degenerate));
    }
    res.final_weights = w;
    return res;
  }

  Eigen::VectorXd raw = Eigen::VectorXd::Ones(n);
  for (int t = 1; t <= ds.horizon; ++t) {
    raw = raw.cwiseProduct(density_ratios(ds, logging, target, t));
    bool degenerate = false;
    const Eigen::VectorXd w = normalize(raw, degenerate);
    const double vt = w.cwiseProduct(detail::step_rewards(ds, t)).mean();
    res.per_step_values.push_back(vt);
    res.value += vt;
    res.step_diagnostics.push_back(detail::weight_diagnostics(w, degenerate));
    if (t == ds.horizon) res.final_weights = w;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Balanced sequential evaluation.

// Builds the step-t balancing problem: contexts per the kernel's extractor,
// the trailing-action window (padded by the dataset's a0 convention), the
// observed step-t actions, and the target's masses on each unit's history.
inline BalanceProblem make_step_balance_problem(const Dataset& ds, const Policy& target, int t,
                                                const KernelSpec& kernel, double lambda) {
  if (t < 1 || t > ds.horizon) throw std::invalid_argument("balance problem: step out of range");
  const int n = ds.n();
  const int lags = kernel.delta_action_lags;
  const int prior_len = lags > 0 ? lags - 1 : 0;
  if (prior_len > t) {
    throw std::invalid_argument(
        "balance problem: delta_action_lags exceeds the available history at step " +
        std::to_string(t));
  }
  const auto& action_set = ds.action_sets[static_cast<std::size_t>(t - 1)];
  const int m = static_cast<int>(action_set.size());

  BalanceProblem p;
  p.kernel = kernel;
  p.lambda = lambda;
  p.contexts.resize(static_cast<std::size_t>(n));
  p.observed_actions.resize(static_cast<std::size_t>(n));
  p.target.action_set = action_set;
  p.target.mass.resize(n, m);
  p.target.deterministic = target.deterministic();

  for (int i = 0; i < n; ++i) {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
    BalanceContext& ctx = p.contexts[static_cast<std::size_t>(i)];

    if (kernel.context_extractor == ContextExtractor::last_step_covariates_with_action_delta) {
      ctx.features = tr.covariates[static_cast<std::size_t>(t - 1)];
    } else {
      ctx.features.resize(static_cast<Eigen::Index>(t) * ds.covariate_dim);
      for (int s = 0; s < t; ++s) {
        ctx.features.segment(static_cast<Eigen::Index>(s) * ds.covariate_dim, ds.covariate_dim) =
            tr.covariates[static_cast<std::size_t>(s)];
      }
    }

    // Trailing actions before step t from the a0-padded history
    // (a0, a_1, ..., a_{t-1}).
    ctx.prior_actions.resize(static_cast<std::size_t>(prior_len));
    for (int k = 0; k < prior_len; ++k) {
      const int idx = t - prior_len + k;  // 0 means a0, else a_idx
      ctx.prior_actions[static_cast<std::size_t>(k)] =
          idx == 0 ? ds.a0 : tr.actions[static_cast<std::size_t>(idx - 1)];
    }

    p.observed_actions[static_cast<std::size_t>(i)] = tr.actions[static_cast<std::size_t>(t - 1)];
    const HistoryView h = history_prefix(ds, i, t);
    for (int k = 0; k < m; ++k) {
      p.target.mass(i, k) = target.mass(t, h, action_set[static_cast<std::size_t>(k)]);
    }
  }
  return p;
}

// Sequentially balanced estimator: one balancing solve per step with
// (X_{1:t}, A_{1:t-1}) as the prognostic covariates, cumulative products of
// the per-step weights applied to the step rewards. Never reads the logging
// policy.
inline EvalResult balanced_value(const Dataset& ds, const Policy& target,
                                 const KernelSpec& kernel, double lambda) {
  const int n = ds.n();
  EvalResult res;
  Eigen::VectorXd cum = Eigen::VectorXd::Ones(n);
  for (int t = 1; t <= ds.horizon; ++t) {
    BalanceSolution sol = solve_balance(make_step_balance_problem(ds, target, t, kernel, lambda));
    cum = cum.cwiseProduct(sol.weights);
    const double vt = cum.cwiseProduct(detail::step_rewards(ds, t)).mean();
    res.per_step_values.push_back(vt);
    res.value += vt;
    res.step_diagnostics.push_back(detail::weight_diagnostics(cum, false));
    res.balance_steps.push_back(std::move(sol));
  }
  res.final_weights = cum;
  return res;
}

// Single-step balanced evaluation (the T = 1 reduction), written directly
// against the balance module.
inline EvalResult balanced_itr_value(const Dataset& ds, const Policy& target,
                                     const KernelSpec& kernel, double lambda) {
  if (ds.horizon != 1) throw std::invalid_argument("balanced_itr_value: dataset horizon must be 1");
  BalanceSolution sol = solve_balance(make_step_balance_problem(ds, target, 1, kernel, lambda));
  EvalResult res;
  Eigen::VectorXd cum = Eigen::VectorXd::Ones(ds.n());
  cum = cum.cwiseProduct(sol.weights);
  const double vt = cum.cwiseProduct(detail::step_rewards(ds, 1)).mean();
  res.per_step_values.push_back(vt);
  res.value += vt;
  res.step_diagnostics.push_back(detail::weight_diagnostics(cum, false));
  res.balance_steps.push_back(std::move(sol));
  res.final_weights = cum;
  return res;
}

// ---------------------------------------------------------------------------
// Augmented (doubly robust style) evaluation.

// Pluggable outcome model. predict_observed is the step-t outcome regression
// at the observed history and action; predict_target is the model's estimate
// of the step-t mean reward for the unit when actions are chosen by the
// target policy (the direct-method term).
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual void fit(const Dataset& ds) = 0;
  virtual bool is_fitted() const = 0;
  virtual double predict_observed(const Dataset& ds, int traj, int t) const = 0;
  virtual double predict_target(const Dataset& ds, const Policy& target, int traj, int t) const = 0;
};

// mu == 0; reduces the augmented estimator to the plain weighted one.
class ZeroOutcomeModel final : public OutcomeModel {
 public:
  void fit(const Dataset&) override { fitted_ = true; }
  bool is_fitted() const override { return fitted_; }
  double predict_observed(const Dataset&, int, int) const override { return 0.0; }
  double predict_target(const Dataset&, const Policy&, int, int) const override { return 0.0; }

 private:
  bool fitted_ = false;
};

// Per-step ridge regression of R_t on (x_t, one-hot a_t, a_t * x_t) with
// ridge coefficient 1e-3; the one-hot block spans the intercept. The
// direct-method term plugs the target's actions into the fit at the
// observed histories.
class RidgeOutcomeModel final : public OutcomeModel {
 public:
  explicit RidgeOutcomeModel(double ridge = 1e-3) : ridge_(ridge) {}

  void fit(const Dataset& ds) override {
    const int n = ds.n();
    const int d = ds.covariate_dim;
    betas_.clear();
    for (int t = 1; t <= ds.horizon; ++t) {
      const auto& action_set = ds.action_sets[static_cast<std::size_t>(t - 1)];
      const int m = static_cast<int>(action_set.size());
      const int pdim = d + m + d;
      Eigen::MatrixXd X(n, pdim);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
        X.row(i) = feature_row(ds, t, tr.covariates[static_cast<std::size_t>(t - 1)],
                               tr.actions[static_cast<std::size_t>(t - 1)]);
        y[i] = tr.rewards[static_cast<std::size_t>(t - 1)];
      }
      Eigen::MatrixXd gram = X.transpose() * X;
      gram.diagonal().array() += ridge_;
      betas_.push_back(gram.ldlt().solve(X.transpose() * y));
    }
    fitted_horizon_ = ds.horizon;
  }

  bool is_fitted() const override { return fitted_horizon_ > 0; }

  double predict_observed(const Dataset& ds, int traj, int t) const override {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(traj)];
    return feature_row(ds, t, tr.covariates[static_cast<std::size_t>(t - 1)],
                       tr.actions[static_cast<std::size_t>(t - 1)])
        .dot(betas_[static_cast<std::size_t>(t - 1)]);
  }

  double predict_target(const Dataset& ds, const Policy& target, int traj, int t) const override {
    const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(traj)];
    const auto& action_set = ds.action_sets[static_cast<std::size_t>(t - 1)];
    const HistoryView h = history_prefix(ds, traj, t);
    double v = 0.0;
    for (int a : action_set) {
      const double mass = target.mass(t, h, a);
      if (mass == 0.0) continue;
      v += mass *
           feature_row(ds, t, tr.covariates[static_cast<std::size_t>(t - 1)], a)
               .dot(betas_[static_cast<std::size_t>(t - 1)]);
    }
    return v;
  }

 private:
  Eigen::RowVectorXd feature_row(const Dataset& ds, int t, const Eigen::VectorXd& x,
                                 int action) const {
    const auto& action_set = ds.action_sets[static_cast<std::size_t>(t - 1)];
    const int d = ds.covariate_dim;
    const int m = static_cast<int>(action_set.size());
    Eigen::RowVectorXd row(d + m + d);
    row.segment(0, d) = x.transpose();
    row.segment(d, m).setZero();
    row[d + ds.action_index(t, action)] = 1.0;
    row.segment(d + m, d) = static_cast<double>(action) * x.transpose();
    return row;
  }

  double ridge_;
  int fitted_horizon_ = 0;
  std::vector<Eigen::VectorXd> betas_;
};

// Augmented estimator: per step, the model's direct term plus the weighted
// average of residuals under the cumulative per-step weights.
inline EvalResult augmented_value(const Dataset& ds, const Policy& target,
                                  const std::vector<Eigen::VectorXd>& weights_per_step,
                                  const OutcomeModel& model) {
  if (!model.is_fitted()) throw std::logic_error("augmented_value: outcome model is not fitted");
  if (static_cast<int>(weights_per_step.size()) != ds.horizon) {
    throw std::invalid_argument("augmented_value: need one weight vector per step");
  }
  const int n = ds.n();
  EvalResult res;
  Eigen::VectorXd cum = Eigen::VectorXd::Ones(n);
  for (int t = 1; t <= ds.horizon; ++t) {
    const Eigen::VectorXd& wt = weights_per_step[static_cast<std::size_t>(t - 1)];
    if (wt.size() != n) throw std::invalid_argument("augmented_value: weight length mismatch");
    cum = cum.cwiseProduct(wt);
    double direct = 0.0;
    double correction = 0.0;
    for (int i = 0; i < n; ++i) {
      const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(i)];
      direct += model.predict_target(ds, target, i, t);
      correction += cum[i] * (tr.rewards[static_cast<std::size_t>(t - 1)] -
                              model.predict_observed(ds, i, t));
    }
    const double vt = direct / n + correction / n;
    res.per_step_values.push_back(vt);
    res.value += vt;
    res.step_diagnostics.push_back(detail::weight_diagnostics(cum, false));
  }
  res.final_weights = cum;
  return res;
}

// ---------------------------------------------------------------------------
// Dispatcher used by the harness.

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::ipw;
  KernelSpec kernel;                           // balanced kinds only
  double lambda = 1.0;                         // balanced kinds only
  std::shared_ptr<OutcomeModel> outcome_model; // balanced_dr; null -> ridge default
};

inline EvalResult evaluate_estimator(const EstimatorSpec& spec, const Dataset& ds,
                                     const Policy& logging, const Policy& target) {
  switch (spec.kind) {
    case EstimatorKind::ipw: return ipw_value(ds, logging, target);
    case EstimatorKind::ipw_T: return ipw_T_value(ds, logging, target);
    case EstimatorKind::nipw: return nipw_value(ds, logging, target, false);
    case EstimatorKind::nipw_T: return nipw_value(ds, logging, target, true);
    case EstimatorKind::balanced: return balanced_value(ds, target, spec.kernel, spec.lambda);
    case EstimatorKind::balanced_dr: {
      EvalResult bal = balanced_value(ds, target, spec.kernel, spec.lambda);
      std::vector<Eigen::VectorXd> weights;
      weights.reserve(bal.balance_steps.size());
      for (const auto& b : bal.balance_steps) weights.push_back(b.weights);
      std::shared_ptr<OutcomeModel> model = spec.outcome_model;
      if (!model) model = std::make_shared<RidgeOutcomeModel>();
      if (!model->is_fitted()) model->fit(ds);
      EvalResult res = augmented_value(ds, target, weights, *model);
      res.balance_steps = std::move(bal.balance_steps);
      return res;
    }
  }
  throw std::invalid_argument("evaluate_estimator: unknown estimator kind");
}

}  // namespace bope
