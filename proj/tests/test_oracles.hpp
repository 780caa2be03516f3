// Test-only oracles, independent of the library's solution paths: exact
// KKT-face enumeration and zooming dense grid search for small simplex QPs,
// plus a brute-force evaluation of the balancing objective.
#pragma once

#include "bope/balance.hpp"
#include "bope/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace bope_test {

inline double qp_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q,
                           const Eigen::VectorXd& w) {
  return 0.5 * w.dot(Q * w) + q.dot(w);
}

// Exact minimum for strictly convex Q: enumerate every candidate support,
// solve the equality-constrained problem on it by plain linear algebra, and
// keep the best nonnegative candidate. The optimal face is among the
// candidates, so the result equals the true optimum to solver precision.
inline double kkt_enumeration_min(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q, double s) {
  const int n = static_cast<int>(Q.rows());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
    Eigen::VectorXd rhs(nf + 1);
    for (int a = 0; a < nf; ++a) {
      for (int b = 0; b < nf; ++b) kkt(a, b) = Q(free_idx[a], free_idx[b]);
      kkt(a, nf) = 1.0;
      kkt(nf, a) = 1.0;
      rhs[a] = -q[free_idx[a]];
    }
    rhs[nf] = s;
    Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if (!sol.allFinite()) continue;
    bool feasible = true;
    for (int a = 0; a < nf; ++a) {
      if (sol[a] < -1e-10) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < nf; ++a) w[free_idx[a]] = std::max(sol[a], 0.0);
    best = std::min(best, qp_objective(Q, q, w));
  }
  return best;
}

// Dense grid search over {w >= 0, sum w = s} with progressive zooming; the
// first n-1 coordinates are enumerated, the last absorbs the sum constraint.
inline double grid_search_min(const Eigen::MatrixXd& Q, const Eigen::VectorXd& q, double s,
                              int rounds = 8, int k = 16) {
  const int n = static_cast<int>(Q.rows());
  Eigen::VectorXd lo = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, s);
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, s / n);
  double best_obj = qp_objective(Q, q, best);

  Eigen::VectorXd w(n);
  for (int round = 0; round < rounds; ++round) {
    std::function<void(int, double)> rec = [&](int dim, double used) {
      if (dim == n - 1) {
        const double last = s - used;
        if (last < -1e-12 || last < lo[dim] - (hi[dim] - lo[dim]) ||
            last > hi[dim] + (hi[dim] - lo[dim])) {
          return;
        }
        w[dim] = std::max(last, 0.0);
        const double o = qp_objective(Q, q, w);
        if (o < best_obj) {
          best_obj = o;
          best = w;
        }
        return;
      }
      for (int i = 0; i <= k; ++i) {
        const double v = lo[dim] + (hi[dim] - lo[dim]) * i / k;
        if (used + v > s + 1e-12) break;
        w[dim] = v;
        rec(dim + 1, used + v);
      }
    };
    rec(0, 0.0);
    for (int d = 0; d < n; ++d) {
      const double cell = (hi[d] - lo[d]) / k;
      lo[d] = std::max(0.0, best[d] - 3.0 * cell);
      hi[d] = std::min(s, best[d] + 3.0 * cell);
    }
  }
  return best_obj;
}

// Direct evaluation of the balancing objective
//   (1/n^2)(sum_ij W_i W_j K_ij - 2 sum_ij W_i sum_a pi_j(a) K_ija + d)
//   + (lambda/n^2) |W|^2
// by explicit loops over eval_kernel, independent of build_gram_pair.
inline double brute_force_balance_objective(const bope::BalanceProblem& p,
                                            const Eigen::VectorXd& w) {
  const int n = p.n();
  const int m = static_cast<int>(p.target.action_set.size());
  auto point = [&](int i, int action) {
    bope::KernelPoint pt;
    pt.context = p.contexts[static_cast<std::size_t>(i)].features;
    pt.action_lags = p.contexts[static_cast<std::size_t>(i)].prior_actions;
    if (p.kernel.delta_action_lags >= 1) pt.action_lags.push_back(action);
    return pt;
  };
  double quad = 0.0, cross = 0.0, constant = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto pi = point(i, p.observed_actions[static_cast<std::size_t>(i)]);
      const auto pj = point(j, p.observed_actions[static_cast<std::size_t>(j)]);
      quad += w[i] * w[j] * bope::eval_kernel(p.kernel, pi, pj);
      for (int a = 0; a < m; ++a) {
        cross += w[i] * p.target.mass(j, a) *
                 bope::eval_kernel(p.kernel, pi, point(j, p.target.action_set[static_cast<std::size_t>(a)]));
        for (int b = 0; b < m; ++b) {
          constant += p.target.mass(i, a) * p.target.mass(j, b) *
                      bope::eval_kernel(p.kernel, point(i, p.target.action_set[static_cast<std::size_t>(a)]),
                                        point(j, p.target.action_set[static_cast<std::size_t>(b)]));
        }
      }
    }
  }
  const double inv_n2 = 1.0 / (static_cast<double>(n) * n);
  return inv_n2 * (quad - 2.0 * cross + constant) + p.lambda * inv_n2 * w.squaredNorm();
}

// Random feasible weights: projection of abs(normal) onto the mean-one set.
inline Eigen::VectorXd random_feasible_weights(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = std::abs(normal(rng)) + 1e-3;
  return w * (static_cast<double>(n) / w.sum());
}

}  // namespace bope_test
