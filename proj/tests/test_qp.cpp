#include "bope/qp.hpp"

#include "test_oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace bope;

namespace {

// Random strictly convex instance with bounded conditioning, so the grid
// oracle's zoom provably tracks the optimum.
QpProblem random_qp(int n, double s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
  Eigen::MatrixXd q = a.transpose() * a / n;
  q *= 2.0 / std::max(q.cwiseAbs().maxCoeff(), 1e-9);
  q += 0.5 * Eigen::MatrixXd::Identity(n, n);
  QpProblem p;
  p.Q = 0.5 * (q + q.transpose());
  p.q.resize(n);
  for (int i = 0; i < n; ++i) p.q[i] = normal(rng);
  p.sum_target = s;
  return p;
}

}  // namespace

TEST_CASE("simplex projection", "[qp]") {
  Eigen::VectorXd v(3);
  v << 0.4, 0.3, 0.3;
  CHECK((project_to_simplex(v, 1.0) - v).cwiseAbs().maxCoeff() <= 1e-15);

  v << 5.0, -1.0, 0.0;
  const Eigen::VectorXd w = project_to_simplex(v, 1.0);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.0);
  CHECK(w[2] == 0.0);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd x(7);
    for (int i = 0; i < 7; ++i) x[i] = 3.0 * normal(rng);
    const double s = 0.5 + std::abs(normal(rng)) * 4.0;
    const Eigen::VectorXd p = project_to_simplex(x, s);
    REQUIRE(p.minCoeff() >= 0.0);
    REQUIRE_THAT(p.sum(), Catch::Matchers::WithinRel(s, 1e-12));
    // Projection optimality: no feasible point sampled at random is closer.
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd y(7);
      for (int i = 0; i < 7; ++i) y[i] = std::abs(normal(rng));
      y *= s / y.sum();
      CHECK((p - x).squaredNorm() <= (y - x).squaredNorm() + 1e-10);
    }
  }
}

TEST_CASE("solve_qp hand-checked instances", "[qp]") {
  SECTION("isotropic quadratic spreads the mass evenly") {
    QpProblem p;
    p.Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    p.q = Eigen::VectorXd::Zero(2);
    p.sum_target = 2.0;
    const QpSolution sol = solve_qp(p);
    CHECK(sol.status == QpStatus::converged);
    CHECK_THAT(sol.w[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(sol.w[1], Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(2.0, 1e-12));
  }
  SECTION("anisotropic curvature tilts the split") {
    // min w1^2 + 2 w2^2 on w1 + w2 = 2: stationarity gives w = (4/3, 2/3).
    QpProblem p;
    p.Q.setZero(2, 2);
    p.Q(0, 0) = 2.0;
    p.Q(1, 1) = 4.0;
    p.q = Eigen::VectorXd::Zero(2);
    p.sum_target = 2.0;
    const QpSolution sol = solve_qp(p);
    CHECK_THAT(sol.w[0], Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-9));
    CHECK_THAT(sol.w[1], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-9));
  }
  SECTION("bound becomes active") {
    // min (w1-3)^2 + (w2+1)^2 on w1 + w2 = 2, w >= 0: the unconstrained
    // stationary point has w2 < 0, so the solution is (2, 0).
    QpProblem p;
    p.Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    p.q.resize(2);
    p.q << -6.0, 2.0;
    p.sum_target = 2.0;
    const QpSolution sol = solve_qp(p);
    CHECK_THAT(sol.w[0], Catch::Matchers::WithinAbs(2.0, 1e-10));
    CHECK_THAT(sol.w[1], Catch::Matchers::WithinAbs(0.0, 1e-10));
  }
}

TEST_CASE("solve_qp input validation", "[qp]") {
  QpProblem p;
  p.Q.setZero(2, 2);
  p.Q(0, 1) = 1.0;  // asymmetric
  p.Q(1, 0) = 0.0;
  p.q = Eigen::VectorXd::Zero(2);
  p.sum_target = 1.0;
  CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);

  p.Q(0, 1) = 0.0;
  p.sum_target = -1.0;
  CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
}

TEST_CASE("solve_qp reports indefiniteness with an eigenvalue estimate", "[qp]") {
  QpProblem p;
  p.Q.setZero(2, 2);
  p.Q(0, 0) = 1.0;
  p.Q(1, 1) = -2.0;
  p.q = Eigen::VectorXd::Zero(2);
  p.sum_target = 2.0;
  try {
    solve_qp(p);
    FAIL("expected QpNumericError");
  } catch (const QpNumericError& err) {
    CHECK_THAT(err.min_eigenvalue(), Catch::Matchers::WithinAbs(-2.0, 1e-9));
    CHECK(std::string(err.what()).find("eigenvalue") != std::string::npos);
  }
}

TEST_CASE("solve_qp agrees with independent optima", "[qp]") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 6);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = size(rng);
    const QpProblem p = random_qp(n, 1.0, rng);
    const QpSolution sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::converged);
    REQUIRE(sol.w.minCoeff() >= -1e-10);
    REQUIRE(std::abs(sol.w.sum() - p.sum_target) <= 1e-8 * p.sum_target);

    const double exact = bope_test::kkt_enumeration_min(p.Q, p.q, p.sum_target);
    CHECK_THAT(sol.objective, Catch::Matchers::WithinAbs(exact, 1e-9));

    const double grid = bope_test::grid_search_min(p.Q, p.q, p.sum_target);
    CHECK_THAT(grid, Catch::Matchers::WithinAbs(exact, 5e-7));
    CHECK(std::abs(sol.objective - grid) <= 1e-6);
  }
}

TEST_CASE("solve_qp dominates arbitrary feasible points", "[qp]") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 12;
    const QpProblem p = random_qp(n, static_cast<double>(n), rng);
    const QpSolution sol = solve_qp(p);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd w = bope_test::random_feasible_weights(n, rng);
      const double other = bope_test::qp_objective(p.Q, p.q, w);
      CHECK(sol.objective <= other + 1e-8 * (1.0 + std::abs(other)));
    }
  }
}

TEST_CASE("solve_qp is deterministic", "[qp]") {
  std::mt19937_64 rng(31);
  const QpProblem p = random_qp(20, 20.0, rng);
  const QpSolution a = solve_qp(p);
  const QpSolution b = solve_qp(p);
  REQUIRE(a.w.size() == b.w.size());
  for (int i = 0; i < a.w.size(); ++i) {
    CHECK(a.w[i] == b.w[i]);  // bitwise
  }
  CHECK(a.objective == b.objective);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("solve_qp respects the iteration budget", "[qp]") {
  std::mt19937_64 rng(13);
  QpProblem p = random_qp(30, 30.0, rng);
  p.max_iters = 3;
  const QpSolution sol = solve_qp(p);
  CHECK(sol.status == QpStatus::max_iters);
  CHECK(sol.iterations <= 3 + 1);
  // Best iterate is still feasible.
  CHECK(sol.w.minCoeff() >= -1e-10);
  CHECK_THAT(sol.w.sum(), Catch::Matchers::WithinRel(30.0, 1e-8));
}

TEST_CASE("warm start does not change the optimum beyond tolerance", "[qp]") {
  std::mt19937_64 rng(41);
  const QpProblem p = random_qp(15, 15.0, rng);
  const QpSolution cold = solve_qp(p);
  const Eigen::VectorXd start = bope_test::random_feasible_weights(15, rng);
  const QpSolution warm = solve_qp(p, &start);
  CHECK_THAT(warm.objective, Catch::Matchers::WithinAbs(cold.objective, 1e-8));
}
