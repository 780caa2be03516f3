#pragma once

#include "bope/kernels.hpp"
#include "bope/qp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace bope {

// One decision step's balancing problem: choose nonnegative mean-one weights
// minimizing the squared RKHS dual norm of the weighted-vs-target moment
// mismatch plus an l2 penalty (lambda / n^2) |W|^2.
struct BalanceProblem {
  std::vector<BalanceContext> contexts;
  std::vector<int> observed_actions;
  StepTarget target;
  KernelSpec kernel;
  double lambda = 1.0;
  double kkt_tol = 1e-8;
  int max_iters = 0;

  int n() const { return static_cast<int>(contexts.size()); }
};

struct BalanceObjective {
  QpProblem qp;
  double constant = 0.0;  // d / n^2, added back when reporting the dual norm
};

struct BalanceSolution {
  Eigen::VectorXd weights;   // mean one, nonnegative
  double dual_norm_sq = 0.0;  // |B(.;W)|_*^2 including the constant term
  double regularizer = 0.0;   // (lambda / n^2) |W|^2
  double objective = 0.0;     // dual_norm_sq + regularizer
  double ess = 0.0;           // n^2 / sum w_i^2
  double zero_fraction = 0.0; // share of weights below 1e-6
  double kkt_residual = 0.0;
  int qp_iterations = 0;
  QpStatus qp_status = QpStatus::converged;
};

inline void validate_balance_problem(const BalanceProblem& p) {
  if (p.contexts.empty()) throw std::invalid_argument("balance: need at least one unit");
  if (p.observed_actions.size() != p.contexts.size()) {
    throw std::invalid_argument("balance: contexts/actions length mismatch");
  }
  if (!(p.lambda > 0.0)) throw std::invalid_argument("balance: lambda must be > 0");
}

// Converts the dual-norm expansion (1/n^2)(W'QW - 2c'W + d) + (lambda/n^2)|W|^2
// into the canonical QP form 1/2 W'Q_eff W + q_eff'W (+ constant).
inline BalanceObjective build_balance_objective(const BalanceProblem& p) {
  validate_balance_problem(p);
  const int n = p.n();
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  GramPair gram = build_gram_pair(p.kernel, p.contexts, p.observed_actions, p.target);

  BalanceObjective out;
  out.qp.Q = (2.0 * inv_n2) * (gram.Q + p.lambda * Eigen::MatrixXd::Identity(n, n));
  out.qp.q = (-2.0 * inv_n2) * gram.c();
  out.qp.sum_target = static_cast<double>(n);
  out.qp.kkt_tol = p.kkt_tol;
  out.qp.max_iters = p.max_iters;
  out.constant = gram.d * inv_n2;
  return out;
}

// Squared dual norm of the mismatch operator at given weights:
// (1/n^2)(w'Qw - 2c'w + d), clamped below at zero.
inline double dual_norm_at(const BalanceProblem& p, const Eigen::VectorXd& w) {
  validate_balance_problem(p);
  const int n = p.n();
  if (w.size() != n) throw std::invalid_argument("dual_norm_at: weight length mismatch");
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  GramPair gram = build_gram_pair(p.kernel, p.contexts, p.observed_actions, p.target);
  const double v = inv_n2 * (w.dot(gram.Q * w) - 2.0 * gram.c().dot(w) + gram.d);
  return std::max(v, 0.0);
}

inline BalanceSolution solve_balance(const BalanceProblem& p,
                                     const Eigen::VectorXd* warm_start = nullptr) {
  BalanceObjective obj = build_balance_objective(p);
  QpSolution qs = solve_qp(obj.qp, warm_start);

  const int n = p.n();
  const double nn = static_cast<double>(n);
  // Feasibility is asserted on every solve; the estimators and the
  // replication harness rely on it unconditionally.
  if (qs.w.minCoeff() < -1e-10 || std::abs(qs.w.sum() - nn) > 1e-8 * nn) {
    throw std::runtime_error("balance: QP returned an infeasible weight vector");
  }

  BalanceSolution sol;
  sol.weights = qs.w;
  const double inv_n2 = 1.0 / (nn * nn);
  sol.regularizer = p.lambda * inv_n2 * qs.w.squaredNorm();
  sol.dual_norm_sq = std::max(qs.objective + obj.constant - sol.regularizer, 0.0);
  sol.objective = sol.dual_norm_sq + sol.regularizer;
  sol.ess = nn * nn / qs.w.squaredNorm();
  sol.zero_fraction =
      static_cast<double>((qs.w.array() < 1e-6).count()) / nn;
  sol.kkt_residual = qs.kkt_residual;
  sol.qp_iterations = qs.iterations;
  sol.qp_status = qs.status;
  return sol;
}

}  // namespace bope
