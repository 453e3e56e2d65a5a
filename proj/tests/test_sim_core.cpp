#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "carl/rollout.hpp"
#include "carl/sim_core.hpp"

using namespace carl;

namespace {

World two_car_world(double ring, double x0, double x1) {
  World w;
  w.ring_length = ring;
  w.vehicles.resize(2);
  w.vehicles[0].position = x0;
  w.vehicles[1].id = 1;
  w.vehicles[1].position = x1;
  return w;
}

RolloutConfig quiet(long horizon = 4500) {
  RolloutConfig c;
  c.horizon_steps = horizon;
  c.warmup_steps = std::min(2500L, horizon - 1);
  c.perturbation_start = c.warmup_steps;
  c.perturbation_end = horizon;
  return c;
}

}  // namespace

TEST_CASE("ring geometry from density") {
  RolloutConfig c;
  CHECK(c.ring_length() == doctest::Approx(22.0 / 85.0 * 1000.0));
  CHECK(c.ring_length() == doctest::Approx(258.8).epsilon(1e-3));
  c.initial_displacement = 0.0;
  const World w = init_ring(c);
  CHECK(w.vehicles[1].position - w.vehicles[0].position == doctest::Approx(258.8235294 / 22.0));
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(headway(w, i) == doctest::Approx(22.0 / 85.0 * 1000.0 / 22.0 - 5.0));
    CHECK(w.vehicles[i].velocity == 0.0);
  }
}

TEST_CASE("two vehicles on a 100 m ring sit at 0 and 50") {
  RolloutConfig c;
  c.n_vehicles = 2;
  c.density = 20.0;
  c.initial_displacement = 0.0;
  const World w = init_ring(c);
  CHECK(w.ring_length == doctest::Approx(100.0));
  CHECK(w.vehicles[0].position == 0.0);
  CHECK(w.vehicles[1].position == doctest::Approx(50.0));
}

TEST_CASE("rv count rounds n times penetration") {
  CHECK(rv_count(22, 0.05) == 1);
  CHECK(rv_count(22, 0.4) == 9);
  CHECK(rv_count(22, 0.6) == 13);
  RolloutConfig c;
  c.rv_penetration = 0.05;
  c.rv_controller = ControllerKind::FollowerStopper;
  const World w = init_ring(c);
  CHECK(w.vehicles[0].controller == ControllerKind::FollowerStopper);
  CHECK(w.vehicles[1].controller == ControllerKind::Idm);
}

TEST_CASE("init_ring rejects bad geometry") {
  RolloutConfig c;
  c.density = 0.0;
  CHECK_THROWS_AS(init_ring(c), std::invalid_argument);
  c.density = -5.0;
  CHECK_THROWS_AS(init_ring(c), std::invalid_argument);
  c.density = 250.0;  // 22 cars need 110 m, the ring is 88 m
  CHECK_THROWS_AS(init_ring(c), std::invalid_argument);
  c = RolloutConfig{};
  c.n_vehicles = 1;
  CHECK_THROWS_AS(init_ring(c), std::invalid_argument);
  c = RolloutConfig{};
  c.warmup_steps = c.horizon_steps;
  CHECK_THROWS_AS(init_ring(c), std::invalid_argument);
}

TEST_CASE("headway is the bumper gap with wraparound") {
  auto w = two_car_world(258.8, 10.0, 20.0);
  CHECK(headway(w, 0) == doctest::Approx(5.0));
  w = two_car_world(258.8, 255.0, 5.0);
  CHECK(headway(w, 0) == doctest::Approx(3.8));
}

TEST_CASE("Euler step examples") {
  auto w = two_car_world(1000.0, 0.0, 500.0);
  std::vector<double> a = {1.0, 0.0};
  step(w, a);
  CHECK(w.vehicles[0].velocity == doctest::Approx(0.1));
  CHECK(w.vehicles[0].position == doctest::Approx(0.01));
  CHECK(w.step_count == 1);

  w = two_car_world(1000.0, 0.0, 500.0);
  a = {-2.0, 0.0};
  step(w, a);
  CHECK(w.vehicles[0].velocity == 0.0);
  CHECK(w.vehicles[0].position == 0.0);

  w = two_car_world(1000.0, 0.0, 500.0);
  w.vehicles[0].velocity = 29.99;
  a = {3.0, 0.0};
  step(w, a);
  CHECK(w.vehicles[0].velocity == 30.0);

  w = two_car_world(1000.0, 0.0, 500.0);
  a = {50.0, 0.0};  // clamped to +3
  step(w, a);
  CHECK(w.vehicles[0].velocity == doctest::Approx(0.3));
  CHECK(w.vehicles[0].acceleration == doctest::Approx(3.0));
}

TEST_CASE("step wants one command per vehicle") {
  auto w = two_car_world(100.0, 0.0, 50.0);
  std::vector<double> a = {0.0};
  CHECK_THROWS_AS(step(w, a), std::invalid_argument);
}

TEST_CASE("overlap is clipped to contact and flagged") {
  auto w = two_car_world(100.0, 0.0, 5.5);
  w.vehicles[0].velocity = 10.0;
  std::vector<double> a = {0.0, 0.0};
  step(w, a);
  CHECK(w.collision);
  CHECK(raw_gap(w, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(headway(w, 0) == 0.0);
  CHECK(w.vehicles[0].velocity <= w.vehicles[1].velocity);
}

TEST_CASE("rollout log shape and invariants") {
  auto c = quiet();
  RolloutContext ctx;
  ctx.perturbations = false;
  const auto log = run_rollout(c, ctx);
  CHECK(log.rows.size() == 22u * 4500u);
  CHECK(log.steps == 4500);
  CHECK_FALSE(log.collision);
  bool ok = true;
  for (long t = 0; t < log.steps; ++t) {
    for (int i = 0; i < log.n_vehicles; ++i) {
      const auto& r = log.at(t, i);
      ok = ok && r.step == t && r.id == i && r.position >= 0.0 && r.position < log.ring_length &&
           r.velocity >= 0.0 && r.velocity <= 30.0 && std::abs(r.acceleration) <= 3.0 + 1e-12 && !r.perturbed;
    }
  }
  CHECK(ok);
}

TEST_CASE("cyclic order never changes") {
  auto c = quiet(3000);
  RolloutContext ctx;
  RingSimulation sim(c, ctx);
  bool ordered = true;
  while (!sim.done()) {
    sim.advance();
    const auto& w = sim.world();
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) total += forward_distance(w, w.vehicles[i].position,
                                                                           w.vehicles[w.leader_of(i)].position);
    // Forward distances around the ring add up to one lap only when the order is intact.
    ordered = ordered && std::abs(total - w.ring_length) < 1e-6;
  }
  CHECK(ordered);
}

TEST_CASE("same seed gives identical logs; different seeds differ") {
  auto c = quiet(3500);
  c.seed = 7;
  RolloutContext ctx;
  const auto a = run_rollout(c, ctx);
  const auto b = run_rollout(c, ctx);
  std::ostringstream sa, sb;
  write_log_csv(a, sa);
  write_log_csv(b, sb);
  CHECK(sa.str() == sb.str());
  c.seed = 8;
  std::ostringstream sc;
  write_log_csv(run_rollout(c, ctx), sc);
  CHECK(sa.str() != sc.str());
}

TEST_CASE("parallel rollouts equal serial rollouts") {
  auto c = quiet(2700);
  RolloutContext ctx;
  const auto par = run_rollouts(c, ctx, 3);
  const auto ser = run_rollouts_serial(c, ctx, 3);
  REQUIRE(par.size() == 3);
  for (int k = 0; k < 3; ++k) {
    std::ostringstream a, b;
    write_log_csv(par[static_cast<std::size_t>(k)], a);
    write_log_csv(ser[static_cast<std::size_t>(k)], b);
    CHECK(a.str() == b.str());
  }
}

TEST_CASE("perturbations only inside the window") {
  auto c = quiet(4500);
  RolloutContext ctx;
  const auto log = run_rollout(c, ctx);
  bool inside = true;
  long perturbed = 0;
  for (const auto& r : log.rows) {
    if (r.perturbed) {
      ++perturbed;
      inside = inside && r.step >= c.perturbation_start && r.step < c.perturbation_end;
    }
  }
  CHECK(inside);
  CHECK(perturbed > 0);
  for (const auto& e : log.events) CHECK(e.start_step >= c.perturbation_start);
}

TEST_CASE("six real-world minutes is 3600 steps") {
  RolloutConfig c;
  c.perturbation_start = 4500;
  c.perturbation_end = 8100;
  CHECK(c.perturbation_steps() * c.dt == doctest::Approx(360.0));
}

TEST_CASE("all-IDM ring develops stop-and-go") {
  auto c = quiet();
  RolloutContext ctx;
  ctx.perturbations = false;
  const auto spread = velocity_spread_series(run_rollout(c, ctx));
  CHECK(*std::max_element(spread.begin(), spread.end()) > 0.5);
}

TEST_CASE("log CSV round trip") {
  auto c = quiet(300);
  c.warmup_steps = 100;
  c.perturbation_start = 100;
  RolloutContext ctx;
  const auto log = run_rollout(c, ctx);
  std::ostringstream out;
  write_log_csv(log, out);
  std::istringstream in(out.str());
  const auto back = read_log_csv(in, log.dt, log.ring_length);
  CHECK(back.n_vehicles == 22);
  CHECK(back.steps == 300);
  std::ostringstream again;
  write_log_csv(back, again);
  CHECK(again.str() == out.str());
  CHECK(out.str().substr(0, kLogHeader.size()) == kLogHeader);

  std::istringstream bad("step,id\n1,2\n");
  CHECK_THROWS_AS(read_log_csv(bad, 0.1, 100.0), std::invalid_argument);
}
