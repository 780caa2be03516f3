#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace bope {

enum class KernelFamily { gaussian, matern52 };

// How a decision-step history is turned into the kernel's context vector.
//  - full_covariates: concatenation of x_1..x_t (the single-step case uses
//    the covariates as-is).
//  - last_step_covariates_with_action_delta: x_t only; earlier history enters
//    through the trailing-action indicator.
enum class ContextExtractor { full_covariates, last_step_covariates_with_action_delta };

struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double length_scale = 1.0;
  ContextExtractor context_extractor = ContextExtractor::last_step_covariates_with_action_delta;
  // Number of trailing actions, current action included, matched exactly by
  // the indicator factor. The step-1 window is padded by the dataset's a0.
  int delta_action_lags = 2;
};

inline KernelSpec itr_kernel(KernelFamily family = KernelFamily::gaussian,
                             double length_scale = 1.0) {
  return KernelSpec{family, length_scale, ContextExtractor::full_covariates, 1};
}

inline KernelSpec dtr_kernel(KernelFamily family = KernelFamily::gaussian,
                             double length_scale = 1.0) {
  return KernelSpec{family, length_scale,
                    ContextExtractor::last_step_covariates_with_action_delta, 2};
}

// A (context, action window) pair as evaluated by the kernel. The last entry
// of action_lags is the current action.
struct KernelPoint {
  Eigen::VectorXd context;
  std::vector<int> action_lags;
};

// Pure context kernel k_x. Gaussian: exp(-|x-x'|^2 / l^2), so l=1 gives
// exp(-|x-x'|^2). Matern nu=5/2: (1 + s + s^2/3) exp(-s) with s = sqrt(5) r / l.
inline double context_kernel(const KernelSpec& spec, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw std::invalid_argument("context_kernel: dimension mismatch");
  if (!(spec.length_scale > 0.0)) throw std::invalid_argument("context_kernel: length_scale must be > 0");
  switch (spec.family) {
    case KernelFamily::gaussian: {
      const double sq = (x - y).squaredNorm();
      return std::exp(-sq / (spec.length_scale * spec.length_scale));
    }
    case KernelFamily::matern52: {
      const double r = (x - y).norm();
      const double s = std::sqrt(5.0) * r / spec.length_scale;
      return (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
  }
  throw std::invalid_argument("context_kernel: unknown kernel family");
}

// Full kernel: indicator over the action window times the context kernel.
inline double eval_kernel(const KernelSpec& spec, const KernelPoint& p, const KernelPoint& q) {
  if (p.action_lags.size() != q.action_lags.size()) {
    throw std::invalid_argument("eval_kernel: action window length mismatch");
  }
  if (p.action_lags != q.action_lags) return 0.0;
  return context_kernel(spec, p.context, q.context);
}

// One unit's balancing context: extracted features plus the trailing
// observed actions before the current step (delta_action_lags - 1 of them).
struct BalanceContext {
  Eigen::VectorXd features;
  std::vector<int> prior_actions;
};

// A target policy restricted to one decision step, materialized on each
// unit's history: mass(i, k) is the probability of action_set[k] for unit i.
struct StepTarget {
  std::vector<int> action_set;
  Eigen::MatrixXd mass;  // n x m
  bool deterministic = false;
};

// The three blocks of the dual-norm expansion on n units:
//   Q(i,j) = K((Z_i,A_i),(Z_j,A_j))
//   C(i,j) = sum_a mass(j,a) K((Z_i,A_i),(Z_j,a)),  c = C * 1
//   d      = sum_{i,j} sum_{a,a'} mass(i,a) mass(j,a') K((Z_i,a),(Z_j,a'))
struct GramPair {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd C;
  double d = 0.0;

  Eigen::VectorXd c() const { return C.rowwise().sum(); }
};

inline GramPair build_gram_pair(const KernelSpec& spec, std::span<const BalanceContext> contexts,
                                std::span<const int> observed_actions, const StepTarget& target) {
  const int n = static_cast<int>(contexts.size());
  if (n < 1) throw std::invalid_argument("build_gram_pair: need at least one unit");
  if (observed_actions.size() != contexts.size()) {
    throw std::invalid_argument("build_gram_pair: contexts/actions length mismatch");
  }
  const int m = static_cast<int>(target.action_set.size());
  if (target.mass.rows() != n || target.mass.cols() != m) {
    throw std::invalid_argument("build_gram_pair: target mass must be n x m");
  }
  const int lags = spec.delta_action_lags;
  if (lags < 0) throw std::invalid_argument("build_gram_pair: delta_action_lags must be >= 0");
  const std::size_t prior_len = lags > 0 ? static_cast<std::size_t>(lags - 1) : 0;
  const Eigen::Index dim = contexts[0].features.size();
  for (int i = 0; i < n; ++i) {
    if (contexts[static_cast<std::size_t>(i)].features.size() != dim) {
      throw std::invalid_argument("build_gram_pair: context dimension mismatch");
    }
    if (contexts[static_cast<std::size_t>(i)].prior_actions.size() != prior_len) {
      throw std::invalid_argument("build_gram_pair: prior action window length mismatch");
    }
  }

  // Observed action indices; only needed when the window covers the current action.
  std::vector<int> obs_idx(static_cast<std::size_t>(n), -1);
  if (lags >= 1) {
    for (int i = 0; i < n; ++i) {
      int idx = -1;
      for (int k = 0; k < m; ++k) {
        if (target.action_set[static_cast<std::size_t>(k)] == observed_actions[static_cast<std::size_t>(i)]) {
          idx = k;
          break;
        }
      }
      if (idx < 0) throw std::invalid_argument("build_gram_pair: observed action not in the action set");
      obs_idx[static_cast<std::size_t>(i)] = idx;
    }
  }

  // The context kernel is shared by all three blocks; evaluate it once.
  Eigen::MatrixXd kx(n, n);
  for (int i = 0; i < n; ++i) {
    kx(i, i) = context_kernel(spec, contexts[static_cast<std::size_t>(i)].features,
                              contexts[static_cast<std::size_t>(i)].features);
    for (int j = i + 1; j < n; ++j) {
      const double v = context_kernel(spec, contexts[static_cast<std::size_t>(i)].features,
                                      contexts[static_cast<std::size_t>(j)].features);
      kx(i, j) = v;
      kx(j, i) = v;
    }
  }

  GramPair out;
  out.Q.setZero(n, n);
  out.C.setZero(n, n);
  out.d = 0.0;
  // mass_dot(i,j) = sum_a mass(i,a) mass(j,a): candidate actions must agree
  // for the indicator to survive, so only the diagonal of (a,a') contributes.
  Eigen::MatrixXd mass_dot;
  if (lags >= 1) mass_dot = target.mass * target.mass.transpose();

  for (int i = 0; i < n; ++i) {
    const auto& pi = contexts[static_cast<std::size_t>(i)].prior_actions;
    for (int j = 0; j < n; ++j) {
      const auto& pj = contexts[static_cast<std::size_t>(j)].prior_actions;
      if (pi != pj) continue;
      const double v = kx(i, j);
      if (lags >= 1) {
        if (obs_idx[static_cast<std::size_t>(i)] == obs_idx[static_cast<std::size_t>(j)]) out.Q(i, j) = v;
        out.C(i, j) = v * target.mass(j, obs_idx[static_cast<std::size_t>(i)]);
        out.d += v * mass_dot(i, j);
      } else {
        out.Q(i, j) = v;
        out.C(i, j) = v;
        out.d += v;
      }
    }
  }
  return out;
}

}  // namespace bope
