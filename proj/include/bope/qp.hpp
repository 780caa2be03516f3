#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bope {

// Convex quadratic program over the scaled simplex:
//   minimize   1/2 w'Qw + q'w
//   subject to sum(w) = sum_target,  w >= 0.
struct QpProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  double sum_target = 1.0;
  double kkt_tol = 1e-8;
  int max_iters = 0;  // <= 0 picks the default budget of 10 * n
};

enum class QpStatus { converged, max_iters };

struct QpSolution {
  Eigen::VectorXd w;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::converged;
};

class QpNumericError : public std::runtime_error {
 public:
  explicit QpNumericError(double min_eigenvalue_estimate)
      : std::runtime_error("qp: effective Q is not positive semidefinite (smallest eigenvalue ~= " +
                           std::to_string(min_eigenvalue_estimate) + ")"),
        min_eigenvalue_(min_eigenvalue_estimate) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

// Euclidean projection onto {w >= 0, sum(w) = s}.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("project_to_simplex: sum target must be > 0");
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  int rho = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    css += u[static_cast<std::size_t>(k)];
    const double cand = (css - s) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - cand > 0.0) {
      rho = static_cast<int>(k + 1);
      theta = cand;
    }
  }
  (void)rho;
  return (v.array() - theta).max(0.0).matrix();
}

namespace detail {

// Norm of the projection of -g onto the tangent cone
// {d : sum(d) = 0, d_i >= 0 for active i}. Zero exactly at a KKT point.
inline double tangent_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                               double active_eps) {
  const Eigen::Index n = w.size();
  double sum_free = 0.0;
  int n_free = 0;
  std::vector<double> active_g;
  active_g.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] > active_eps) {
      sum_free += g[i];
      ++n_free;
    } else {
      active_g.push_back(g[i]);
    }
  }
  // Solve for nu: sum_free(nu - g_i) + sum_active max(0, nu - g_i) = 0,
  // a piecewise-linear increasing function of nu.
  std::sort(active_g.begin(), active_g.end());
  double nu;
  if (n_free == 0) {
    nu = active_g.empty() ? 0.0 : active_g.front();
  } else {
    double slope = static_cast<double>(n_free);
    double rhs = sum_free;  // root of slope * nu - rhs = 0 within a segment
    nu = rhs / slope;
    for (double b : active_g) {
      if (nu <= b) break;
      slope += 1.0;
      rhs += b;
      nu = rhs / slope;
    }
  }
  double sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = (w[i] > active_eps) ? (nu - g[i]) : std::min(0.0, g[i] - nu) * -1.0;
    sq += di * di;
  }
  return std::sqrt(sq);
}

}  // namespace detail

// Projected-gradient / active-set hybrid. Spectral (Barzilai-Borwein)
// projected steps with exact segment line search locate the active face;
// an equality-constrained solve on the free variables polishes to the KKT
// tolerance. Deterministic: identical inputs give identical iterates.
inline QpSolution solve_qp(const QpProblem& p, const Eigen::VectorXd* warm_start = nullptr) {
  const Eigen::Index n = p.Q.rows();
  if (n < 1 || p.Q.cols() != n) throw std::invalid_argument("qp: Q must be square and non-empty");
  if (p.q.size() != n) throw std::invalid_argument("qp: q size mismatch");
  if (!(p.sum_target > 0.0)) throw std::invalid_argument("qp: sum_target must be > 0");
  const double qmag = std::max(1.0, p.Q.cwiseAbs().maxCoeff());
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * qmag) {
    throw std::invalid_argument("qp: Q must be symmetric");
  }

  const double s = p.sum_target;
  const int budget = p.max_iters > 0 ? p.max_iters : std::max(200, 10 * static_cast<int>(n));
  const double tol = p.kkt_tol * (1.0 + p.q.norm());
  const double active_eps = 1e-12 * (s / static_cast<double>(n));
  const double diag_scale = std::max(p.Q.diagonal().cwiseAbs().maxCoeff(), 1e-300);

  auto throw_indefinite = [&]() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.Q, Eigen::EigenvaluesOnly);
    throw QpNumericError(es.eigenvalues().minCoeff());
  };

  Eigen::VectorXd w = warm_start != nullptr
                          ? project_to_simplex(*warm_start, s)
                          : Eigen::VectorXd::Constant(n, s / static_cast<double>(n));
  Eigen::VectorXd g = p.Q * w + p.q;
  auto objective = [&](const Eigen::VectorXd& wv, const Eigen::VectorXd& gv) {
    return 0.5 * wv.dot(gv + p.q);
  };

  int iters = 0;
  double bb_step = 1.0 / diag_scale;
  bool polish_ok = true;
  QpSolution out;

  auto finish = [&](QpStatus st) {
    out.w = w;
    out.objective = objective(w, g);
    out.kkt_residual = detail::tangent_residual(w, g, active_eps);
    out.iterations = iters;
    out.status = st;
    return out;
  };

  for (int outer = 0; outer < 64; ++outer) {
    // --- spectral projected-gradient phase ---
    const int pg_steps = outer == 0 ? 200 : 40;
    for (int k = 0; k < pg_steps; ++k) {
      if (detail::tangent_residual(w, g, active_eps) <= tol) return finish(QpStatus::converged);
      if (iters >= budget) return finish(QpStatus::max_iters);
      Eigen::VectorXd trial = project_to_simplex(w - bb_step * g, s);
      Eigen::VectorXd d = trial - w;
      const double dn2 = d.squaredNorm();
      if (dn2 <= 1e-30 * s * s) break;
      Eigen::VectorXd qd = p.Q * d;
      const double curv = d.dot(qd);
      if (curv < -1e-8 * diag_scale * dn2) throw_indefinite();
      const double slope = g.dot(d);
      double alpha = 1.0;
      if (curv > 0.0) alpha = std::clamp(-slope / curv, 0.0, 1.0);
      else if (slope >= 0.0) alpha = 0.0;
      ++iters;
      if (alpha <= 0.0) break;
      w += alpha * d;
      g += alpha * qd;
      if (curv > 0.0) bb_step = std::clamp(dn2 / curv, 1e-12 / diag_scale, 1e12 / diag_scale);
    }

    if (!polish_ok) continue;

    // --- active-set polish on the face identified above ---
    std::vector<bool> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = (w[i] <= active_eps);
    // Land exactly on the face, keeping the sum constraint tight.
    {
      double sum_free = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) w[i] = 0.0;
        else sum_free += w[i];
      }
      if (sum_free <= 0.0) {
        // Everything got classified active; restart from uniform.
        w.setConstant(s / static_cast<double>(n));
        std::fill(active.begin(), active.end(), false);
      } else if (sum_free != s) {
        w *= s / sum_free;
      }
      g = p.Q * w + p.q;
    }

    const int polish_cap = 3 * static_cast<int>(n) + 16;
    bool back_to_gradient = false;
    for (int inner = 0; inner < polish_cap && !back_to_gradient; ++inner) {
      std::vector<Eigen::Index> free_idx;
      free_idx.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) free_idx.push_back(i);
      }
      const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
      if (nf == 0) {
        back_to_gradient = true;
        break;
      }

      Eigen::MatrixXd qff(nf, nf);
      Eigen::VectorXd qf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        qf[a] = p.q[free_idx[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < nf; ++b) {
          qff(a, b) = p.Q(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(qff);
      ++iters;
      if (llt.info() != Eigen::Success) {
        // Either indefinite (error) or merely singular PSD (fall back to
        // projected gradient only).
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qff, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-8 * diag_scale) throw_indefinite();
        polish_ok = false;
        back_to_gradient = true;
        break;
      }
      // Equality-constrained optimum on the free face via the Schur
      // complement of the single sum constraint.
      Eigen::VectorXd x1 = llt.solve(-qf);
      Eigen::VectorXd x2 = llt.solve(Eigen::VectorXd::Ones(nf));
      const double denom = x2.sum();
      if (!(denom > 0.0) || !std::isfinite(denom)) {
        polish_ok = false;
        back_to_gradient = true;
        break;
      }
      const double nu = (s - x1.sum()) / denom;
      Eigen::VectorXd wf = x1 + nu * x2;

      const double min_wf = nf > 0 ? wf.minCoeff() : 0.0;
      if (min_wf >= -1e-14 * s) {
        for (Eigen::Index a = 0; a < nf; ++a) {
          w[free_idx[static_cast<std::size_t>(a)]] = std::max(wf[a], 0.0);
        }
        g = p.Q * w + p.q;
        // Lagrange multipliers of the bound constraints.
        Eigen::Index worst = -1;
        double worst_lambda = -p.kkt_tol * (1.0 + p.q.norm());
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!active[static_cast<std::size_t>(i)]) continue;
          const double lambda = g[i] - nu;
          if (lambda < worst_lambda) {
            worst_lambda = lambda;
            worst = i;
          }
        }
        if (worst < 0) {
          if (detail::tangent_residual(w, g, active_eps) <= tol) return finish(QpStatus::converged);
          back_to_gradient = true;  // numerically inconclusive: refine by gradient
          break;
        }
        active[static_cast<std::size_t>(worst)] = false;
        if (iters >= budget) return finish(QpStatus::max_iters);
        continue;
      }

      // Partial step along p = wf - w_F until the first bound blocks.
      double alpha = 1.0;
      Eigen::Index blocker = -1;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
        const double dir = wf[a] - w[i];
        if (dir < 0.0) {
          const double step_to_bound = w[i] / -dir;
          if (step_to_bound < alpha) {
            alpha = step_to_bound;
            blocker = i;
          }
        }
      }
      if (blocker < 0) {
        back_to_gradient = true;
        break;
      }
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
        w[i] = std::max(w[i] + alpha * (wf[a] - w[i]), 0.0);
      }
      w[blocker] = 0.0;
      active[static_cast<std::size_t>(blocker)] = true;
      g = p.Q * w + p.q;
      if (iters >= budget) return finish(QpStatus::max_iters);
    }
  }
  return finish(QpStatus::max_iters);
}

}  // namespace bope
