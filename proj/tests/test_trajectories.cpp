#include "bope/trajectories.hpp"

#include "bope/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace bope;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Dataset tiny_dataset() {
  Dataset ds;
  ds.horizon = 3;
  ds.covariate_dim = 2;
  ds.action_sets.assign(3, {-1, +1});
  Trajectory tr;
  tr.covariates = {vec2(0.1, 0.2), vec2(1.0, -1.0), vec2(0.5, 0.5)};
  tr.actions = {+1, -1, +1};
  tr.rewards = {1.0, 2.0, 3.0};
  ds.trajectories.push_back(tr);
  return ds;
}

}  // namespace

TEST_CASE("validate_dataset accepts a minimal well-formed input", "[trajectories]") {
  Dataset ds;
  ds.horizon = 1;
  ds.covariate_dim = 1;
  ds.action_sets = {{0, 1}};
  Trajectory tr;
  tr.covariates = {Eigen::VectorXd::Zero(1)};
  tr.actions = {1};
  tr.rewards = {0.5};
  ds.trajectories.push_back(tr);
  CHECK(validate_dataset(ds).ok());
}

TEST_CASE("validate_dataset reports itemized violations", "[trajectories]") {
  SECTION("reward length mismatch") {
    Dataset ds = tiny_dataset();
    ds.trajectories[0].rewards.pop_back();
    const auto res = validate_dataset(ds);
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.violations.size() == 1);
    CHECK(res.violations[0].trajectory == 0);
    CHECK(res.violations[0].field == "rewards");
  }
  SECTION("action outside the declared set names the offending step") {
    Dataset ds = tiny_dataset();
    ds.trajectories[0].actions[1] = 7;
    const auto res = validate_dataset(ds);
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.violations.size() == 1);
    CHECK(res.violations[0].trajectory == 0);
    CHECK(res.violations[0].step == 2);
    CHECK(res.violations[0].field == "actions");
  }
  SECTION("empty dataset") {
    Dataset ds = tiny_dataset();
    ds.trajectories.clear();
    CHECK_FALSE(validate_dataset(ds).ok());
  }
  SECTION("validation is idempotent") {
    Dataset ds = tiny_dataset();
    ds.trajectories[0].actions[1] = 7;
    const auto a = validate_dataset(ds);
    const auto b = validate_dataset(ds);
    REQUIRE(a.violations.size() == b.violations.size());
    for (std::size_t k = 0; k < a.violations.size(); ++k) {
      CHECK(a.violations[k].trajectory == b.violations[k].trajectory);
      CHECK(a.violations[k].step == b.violations[k].step);
      CHECK(a.violations[k].field == b.violations[k].field);
      CHECK(a.violations[k].reason == b.violations[k].reason);
    }
  }
}

TEST_CASE("policy_mass checked evaluation", "[trajectories]") {
  const DgpLoggingPolicy logging(2.0);
  const DgpTargetPolicy target;
  const std::vector<int> actions{-1, +1};

  SECTION("reference logging policy at the origin is a coin flip") {
    std::vector<Eigen::VectorXd> xs{vec2(0.0, 0.0)};
    CHECK(policy_mass(logging, 1, xs, {}, +1, actions) == 0.5);
    CHECK(policy_mass(logging, 1, xs, {}, -1, actions) == 0.5);
  }
  SECTION("reference target puts full mass on +1 when the score is negative") {
    // (x1 + x2) * a_prev = -1.3
    std::vector<Eigen::VectorXd> xs{vec2(0.0, 0.0), vec2(-0.3, -1.0)};
    std::vector<int> as{+1};
    CHECK(policy_mass(target, 2, xs, as, +1, actions) == 1.0);
    CHECK(policy_mass(target, 2, xs, as, -1, actions) == 0.0);
  }
  SECTION("bad arguments raise invalid_argument") {
    std::vector<Eigen::VectorXd> xs{vec2(0.0, 0.0)};
    CHECK_THROWS_AS(policy_mass(logging, 2, xs, {}, +1, actions), std::invalid_argument);
    CHECK_THROWS_AS(policy_mass(logging, 0, {}, {}, +1, actions), std::invalid_argument);
    CHECK_THROWS_AS(policy_mass(logging, 1, xs, {}, 3, actions), std::invalid_argument);
  }
}

TEST_CASE("policy masses sum to one over random histories", "[trajectories]") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> coin(0, 1);
  const DgpLoggingPolicy logging(2.0);
  const DgpTargetPolicy target;
  const UniformPolicy uniform(2);

  for (int rep = 0; rep < 300; ++rep) {
    const int t = 1 + rep % 4;
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> as;
    for (int s = 0; s < t; ++s) xs.push_back(vec2(3.0 * normal(rng), 3.0 * normal(rng)));
    for (int s = 0; s + 1 < t; ++s) as.push_back(coin(rng) ? 1 : -1);
    const HistoryView h{std::span<const Eigen::VectorXd>(xs.data(), xs.size()),
                        std::span<const int>(as.data(), as.size()), +1};
    for (const Policy* p : {static_cast<const Policy*>(&logging),
                            static_cast<const Policy*>(&target),
                            static_cast<const Policy*>(&uniform)}) {
      const double total = p->mass(t, h, -1) + p->mass(t, h, +1);
      CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
      CHECK(p->mass(t, h, -1) >= 0.0);
      CHECK(p->mass(t, h, +1) >= 0.0);
    }
    if (target.deterministic()) {
      CHECK((target.mass(t, h, +1) == 1.0 || target.mass(t, h, -1) == 1.0));
    }
  }
}

TEST_CASE("dataset CSV round trip is exact", "[trajectories]") {
  DgpConfig cfg;
  cfg.horizon = 3;
  cfg.n = 25;
  const Dataset ds = sample_dataset(cfg, 99);

  std::stringstream buf;
  write_dataset_csv(ds, buf);
  const Dataset back = read_dataset_csv(buf, ds.a0);

  REQUIRE(back.n() == ds.n());
  REQUIRE(back.horizon == ds.horizon);
  REQUIRE(back.covariate_dim == ds.covariate_dim);
  for (int i = 0; i < ds.n(); ++i) {
    for (int t = 0; t < ds.horizon; ++t) {
      CHECK(back.trajectories[i].actions[t] == ds.trajectories[i].actions[t]);
      CHECK(back.trajectories[i].rewards[t] == ds.trajectories[i].rewards[t]);
      CHECK((back.trajectories[i].covariates[t] - ds.trajectories[i].covariates[t])
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }
  CHECK(validate_dataset(back).ok());
}

TEST_CASE("dataset CSV errors carry line numbers", "[trajectories]") {
  SECTION("bad header") {
    std::stringstream buf("nope,t,x_1,action,reward\n");
    CHECK_THROWS_WITH(read_dataset_csv(buf), Catch::Matchers::ContainsSubstring("line 1"));
  }
  SECTION("unparseable covariate") {
    std::stringstream buf("traj_id,t,x_1,action,reward\n0,1,abc,1,0.5\n");
    CHECK_THROWS_WITH(read_dataset_csv(buf), Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("non contiguous steps") {
    std::stringstream buf("traj_id,t,x_1,action,reward\n0,1,0.0,1,0.5\n0,3,0.0,1,0.5\n");
    CHECK_THROWS_WITH(read_dataset_csv(buf), Catch::Matchers::ContainsSubstring("line 3"));
  }
  SECTION("unsorted trajectories") {
    std::stringstream buf(
        "traj_id,t,x_1,action,reward\n1,1,0.0,1,0.5\n0,1,0.0,1,0.5\n");
    CHECK_THROWS_WITH(read_dataset_csv(buf), Catch::Matchers::ContainsSubstring("line 3"));
  }
  SECTION("field count mismatch") {
    std::stringstream buf("traj_id,t,x_1,action,reward\n0,1,0.0,1\n");
    CHECK_THROWS_WITH(read_dataset_csv(buf), Catch::Matchers::ContainsSubstring("line 2"));
  }
}
