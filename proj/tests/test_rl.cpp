#include <doctest.h>

#include <cmath>
#include <numeric>

#include "carl/ppo.hpp"
#include "carl/rl.hpp"
#include "oracles.hpp"

using namespace carl;

TEST_CASE("reward examples") {
  CHECK(reward_efficiency(10, 0.5, CongestionLabel::FreeFlow) == doctest::Approx(6.5));
  CHECK(reward_efficiency(10, 0.5, CongestionLabel::Congested) == doctest::Approx(1.5));
  CHECK(reward_efficiency(10, 0.05, CongestionLabel::Congested) == doctest::Approx(7.5 - 0.1 - 1.0));
  CHECK(reward_efficiency(10, -0.5, CongestionLabel::Leaving) == doctest::Approx(1.5));
  CHECK(reward_efficiency(10, -0.5, CongestionLabel::Congested) == doctest::Approx(6.5));
  CHECK(reward_safety(10, 0.0, CongestionLabel::Forming) == doctest::Approx(0.5));
  CHECK(reward_safety(10, 1.0, CongestionLabel::Forming) == doctest::Approx(1.5 - 4.0 - 5.0));
  CHECK(reward_follower(0, 0, 0) == doctest::Approx(10.0));
  CHECK(reward_follower(5, 1, -1) == doctest::Approx(-10 + 4 - 4 + 10));
}

TEST_CASE("rewards match the reference on a dense grid") {
  int n = 0;
  for (int iv = 0; iv <= 30; ++iv) {
    for (int ia = -30; ia <= 30; ++ia) {
      const double v = iv, a = ia * 0.1;
      for (auto c : kAllLabels) {
        const int code = static_cast<int>(index_of(c));
        REQUIRE(reward_efficiency(v, a, c) == oracle::r_eff(v, a, code));
        REQUIRE(reward_safety(v, a, c) == oracle::r_safe(v, a, code));
        ++n;
      }
      for (int idp = 0; idp <= 5; ++idp) {
        REQUIRE(reward_follower(idp * 4.0, v - 15.0, a) ==
                doctest::Approx(oracle::r_follow(idp * 4.0, v - 15.0, a)).epsilon(1e-12));
      }
    }
  }
  CHECK(n == 31 * 61 * 6);
}

TEST_CASE("platoon assignment") {
  CHECK(platoon_assign(22, 0.05).n_rv == 1);
  CHECK(platoon_assign(22, 0.05).followers.empty());
  const auto p = platoon_assign(22, 0.4);
  CHECK(p.n_rv == 9);
  CHECK(p.leader == 8);
  CHECK(p.followers.size() == 8);
  CHECK(platoon_assign(22, 0.6).n_rv == 13);
  CHECK_THROWS_AS(platoon_assign(22, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(platoon_assign(22, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(platoon_assign(22, 0.9), std::invalid_argument);
}

TEST_CASE("GAE limits") {
  const std::vector<double> r = {1.0, 2.0, 3.0};
  const std::vector<double> v = {0.5, 0.25, 0.125};
  SUBCASE("gamma 0 is the immediate advantage") {
    const auto g = compute_gae(r, v, 9.0, false, 0.0, 1.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g.advantages[k] == doctest::Approx(r[k] - v[k]));
  }
  SUBCASE("lambda 1 is the Monte Carlo return minus the baseline") {
    const double gamma = 0.9;
    const auto g = compute_gae(r, v, 0.0, true, gamma, 1.0);
    CHECK(g.returns[2] == doctest::Approx(3.0));
    CHECK(g.returns[1] == doctest::Approx(2.0 + gamma * 3.0));
    CHECK(g.returns[0] == doctest::Approx(1.0 + gamma * 2.0 + gamma * gamma * 3.0));
    for (std::size_t k = 0; k < 3; ++k) CHECK(g.advantages[k] == doctest::Approx(g.returns[k] - v[k]));
  }
  SUBCASE("lambda 0 is the one-step TD error") {
    const double gamma = 0.9, boot = 4.0;
    const auto g = compute_gae(r, v, boot, false, gamma, 0.0);
    CHECK(g.advantages[0] == doctest::Approx(1.0 + gamma * 0.25 - 0.5));
    CHECK(g.advantages[1] == doctest::Approx(2.0 + gamma * 0.125 - 0.25));
    CHECK(g.advantages[2] == doctest::Approx(3.0 + gamma * boot - 0.125));
  }
  SUBCASE("truncation bootstraps, termination does not") {
    const auto t = compute_gae(r, v, 4.0, true, 0.9, 0.5);
    const auto u = compute_gae(r, v, 4.0, false, 0.9, 0.5);
    CHECK(u.advantages[2] - t.advantages[2] == doctest::Approx(0.9 * 4.0));
  }
  CHECK_THROWS_AS(compute_gae(r, std::vector<double>{1.0}, 0.0, true, 0.9, 0.9), std::invalid_argument);
}

TEST_CASE("observation layout") {
  RolloutConfig c;
  c.initial_displacement = 0.0;
  World w = init_ring(c);
  w.vehicles[1].velocity = 3.0;
  const auto o = observe(w, 0, CongestionLabel::Leaving);
  const auto x = o.to_vector();
  REQUIRE(x.size() == 9);
  CHECK(x[0] == 0.0);
  CHECK(x[1] == doctest::Approx(w.ring_length / 22 - 5));
  CHECK(x[2] == 3.0);
  CHECK(std::accumulate(x.begin() + 3, x.end(), 0.0) == 1.0);
  CHECK(x[3 + index_of(CongestionLabel::Leaving)] == 1.0);
  // Rule labels on a uniform ring at rest: Congested.
  CHECK(observe(w, 5, nullptr).label == CongestionLabel::Congested);
}

TEST_CASE("follower observation") {
  RolloutConfig c;
  c.initial_displacement = 0.0;
  c.rv_penetration = 0.2;
  World w = init_ring(c);
  const auto p = platoon_assign(22, 0.2);
  REQUIRE(p.n_rv == 4);
  w.vehicles[3].velocity = 2.0;
  const auto x = follower_observation(w, p, 1);
  REQUIRE(x.size() == 32);
  const double spacing = w.ring_length / 22;
  CHECK(x[0] == doctest::Approx(-spacing));
  CHECK(x[2] == 0.0);
  CHECK(x[4] == doctest::Approx(spacing));
  CHECK(x[6] == doctest::Approx(2 * spacing));
  CHECK(x[7] == 2.0);
  for (std::size_t k = 8; k < 32; ++k) CHECK(x[k] == 0.0);
}

TEST_CASE("ring environment shapes") {
  RingEnvConfig cfg;
  cfg.rollout.rv_penetration = 0.2;
  cfg.rollout.warmup_steps = 200;
  cfg.rollout.horizon_steps = 400;
  cfg.rollout.perturbation_start = 200;
  cfg.rollout.perturbation_end = 400;
  cfg.episode_steps = 50;
  RingEnv env(cfg);
  CHECK(env.n_agents() == 4);
  CHECK(env.obs_dim() == 9);
  auto obs = env.reset(1);
  REQUIRE(obs.size() == 4);
  for (const auto& o : obs) CHECK(o.size() == 9);
  std::vector<double> a(4, 0.5);
  int steps = 0;
  Environment::StepResult r;
  do {
    r = env.step(a);
    ++steps;
    REQUIRE(r.rewards.size() == 4);
    REQUIRE(r.obs.size() == 4);
  } while (!r.truncated);
  CHECK(steps == 50);
  CHECK_FALSE(r.terminal);
  CHECK_THROWS_AS(env.step(std::vector<double>(3, 0.0)), std::invalid_argument);

  auto fcfg = cfg;
  fcfg.reward = RewardKind::Follower;
  fcfg.leader_policy = [](const World&, std::size_t) { return 0.0; };
  RingEnv fenv(fcfg);
  CHECK(fenv.n_agents() == 3);
  CHECK(fenv.obs_dim() == 32);
  const auto fo = fenv.reset(2);
  REQUIRE(fo.size() == 3);
  CHECK(fo[0].size() == 32);
  CHECK(fenv.step(std::vector<double>(3, 0.0)).rewards.size() == 3);
  CHECK(RingEnv::observation_scale(RewardKind::Follower, 30).size() == 32);
  CHECK(RingEnv::observation_scale(RewardKind::Safety, 30).size() == 9);
}

TEST_CASE("ring environment resets are reproducible") {
  RingEnvConfig cfg;
  cfg.rollout.rv_penetration = 0.05;
  cfg.rollout.warmup_steps = 300;
  cfg.rollout.horizon_steps = 500;
  cfg.rollout.perturbation_start = 300;
  cfg.rollout.perturbation_end = 500;
  cfg.episode_steps = 100;
  RingEnv a(cfg);
  const auto b = a.clone();
  CHECK(a.reset(11) == b->reset(11));
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> act = {std::sin(k * 0.1)};
    const auto ra = a.step(act);
    const auto rb = b->step(act);
    REQUIRE(ra.obs == rb.obs);
    REQUIRE(ra.rewards == rb.rewards);
  }
}

TEST_CASE("policy basics") {
  auto p = make_policy(9, 1, {64, 32, 16}, 3);
  CHECK(p.obs_dim() == 9);
  CHECK(p.act_dim() == 1);
  const std::vector<double> obs(9, 1.0);
  CHECK(std::abs(p.mean_action(obs)[0]) < 0.1);
  const std::vector<double> mu = {0.0}, act = {0.0};
  CHECK(p.log_prob(mu, act) == doctest::Approx(-0.5 * std::log(2 * 3.141592653589793)));
  CHECK(p.entropy() == doctest::Approx(0.5 + 0.5 * std::log(2 * 3.141592653589793)));
  p.obs_scale.assign(9, 0.5);
  const auto back = policy_from_json(to_json(p));
  CHECK(back.mean_action(obs) == p.mean_action(obs));
  CHECK(back.obs_scale == p.obs_scale);
  p.obs_scale.assign(3, 1.0);
  CHECK_THROWS_AS(p.mean_action(obs), std::invalid_argument);
}
