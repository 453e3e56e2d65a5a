#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "carl/metrics.hpp"
#include "carl/rng.hpp"
#include "oracles.hpp"

using namespace carl;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Every vehicle at speed v, equally spaced, for `steps` steps.
TrajectoryLog steady_log(int n, double ring, double v, long steps, double offset = 0.0) {
  TrajectoryLog log;
  log.ring_length = ring;
  log.n_vehicles = n;
  log.steps = steps;
  for (long t = 0; t < steps; ++t) {
    for (int i = 0; i < n; ++i) {
      LogRow r;
      r.step = t;
      r.id = i;
      r.position = std::fmod(offset + i * ring / n + v * log.dt * static_cast<double>(t), ring);
      r.velocity = v;
      r.headway = ring / n - log.vehicle_length;
      log.rows.push_back(r);
    }
  }
  return log;
}

}  // namespace

TEST_CASE("TTC and DRAC anchors") {
  CHECK(ttc(20.0, 4.0) == 5.0);
  CHECK(drac(10.0, 2.0) == 0.2);
  CHECK(ttc(20.0, 0.0) == kInf);
  CHECK(ttc(20.0, -1.0) == kInf);
  CHECK(drac(20.0, -1.0) == 0.0);
  bool hit = false;
  CHECK(drac(0.0, 1.0, &hit) == kInf);
  CHECK(hit);
  CHECK(drac(5.0, 2.0) * 4 == doctest::Approx(drac(5.0, 4.0)));
}

TEST_CASE("TTC and DRAC match the reference on random inputs") {
  Rng rng(21);
  for (int k = 0; k < 10000; ++k) {
    const double gap = rng.uniform(0.01, 100.0), closing = rng.uniform(-10.0, 10.0);
    const double want = oracle::ttc(gap, closing);
    if (std::isinf(want)) {
      REQUIRE(ttc(gap, closing) == want);
    } else {
      REQUIRE(ttc(gap, closing) == doctest::Approx(want).epsilon(1e-12));
    }
    REQUIRE(drac(gap, closing) == doctest::Approx(oracle::drac(gap, closing)).epsilon(1e-12));
  }
}

TEST_CASE("steady flow throughput is n v / L") {
  const double ring = 258.8;
  const auto log = steady_log(22, ring, 5.0, 3600);
  const double want = 22.0 * 5.0 / ring * 3600.0;
  CHECK(want == doctest::Approx(1530).epsilon(0.001));
  const double got = throughput(log, 0.0);
  CHECK(std::abs(got - 1530.0) < 70.0);
  // One crossing either way over the window.
  const double per_crossing = 3600.0 / (3599 * 0.1);
  for (double probe : {0.0, 13.3, 100.0, 250.0}) CHECK(std::abs(throughput(log, probe) - got) <= per_crossing + 1e-9);
  CHECK(throughput(log, 0.0) == throughput(log, 0.0));
  CHECK(throughput(steady_log(22, ring, 0.0, 600), 0.0) == 0.0);
}

TEST_CASE("worst-case aggregation picks the known vehicle") {
  auto log = steady_log(4, 100.0, 10.0, 50);
  // Vehicle 2 closes on vehicle 3 at 4 m/s with a 20 m gap at step 30: TTC 5, DRAC 0.4.
  auto& ego = log.rows[30 * 4 + 2];
  ego.velocity = 14.0;
  ego.headway = 20.0;
  // Vehicle 0 closes more gently.
  auto& mild = log.rows[10 * 4 + 0];
  mild.velocity = 11.0;
  mild.headway = 20.0;
  const auto fm = default_fuel_model();
  const auto all = rollout_metrics(log, {}, fm, {});
  CHECK(all.ttc == doctest::Approx(5.0));
  CHECK(all.drac == doctest::Approx(0.4));
  const auto only0 = rollout_metrics(log, {0}, fm, {});
  CHECK(only0.ttc == doctest::Approx(20.0));
  CHECK(only0.drac == doctest::Approx(0.025));
  const auto only1 = rollout_metrics(log, {1}, fm, {});
  CHECK(only1.ttc == kInf);
  CHECK(only1.drac == 0.0);
  MetricsOptions late;
  late.window = {31, -1};
  CHECK(rollout_metrics(log, {}, fm, late).ttc == kInf);
  CHECK_THROWS_AS(rollout_metrics(log, {7}, fm, {}), std::invalid_argument);
}

TEST_CASE("summary statistics") {
  const auto one = summarize({3.0});
  CHECK(one.mean == 3.0);
  CHECK(one.std == 0.0);
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
  Rng rng(2);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.normal() * 1e6;
  const auto a = summarize(v);
  std::reverse(v.begin(), v.end());
  std::swap(v[3], v[700]);
  const auto b = summarize(v);
  CHECK(a.mean == b.mean);
  CHECK(a.std == b.std);
  CHECK(summarize({1.0, kInf}).mean == kInf);
}

TEST_CASE("report JSON carries infinity as text") {
  const auto fm = default_fuel_model();
  const auto log = steady_log(3, 60.0, 5.0, 20);
  const auto r = report({log, log}, {0}, fm, {});
  CHECK(r.rollouts.size() == 2);
  CHECK(r.collisions == 0);
  const auto j = to_json(r);
  CHECK(j["ttc_worst_rv_s"]["mean"] == "inf");
  CHECK(j["drac_worst_rv_mps2"]["mean"] == 0.0);
  CHECK(j["rollouts"][0]["ttc"] == "inf");
  CHECK(j["n_rollouts"] == 2);
  std::ostringstream out;
  write_report_csv_row(r, "idm", 0.0, out);
  CHECK(out.str().rfind("idm,", 0) == 0);
  CHECK_THROWS_AS(report({}, {}, fm, {}), std::invalid_argument);
}

TEST_CASE("fuel model") {
  const auto fm = default_fuel_model();
  CHECK(fm.c[0] > 0.0);
  CHECK(fuel_rate(0.0, 0.0, fm) > 0.0);
  CHECK(fuel_rate(0.0, 0.0, fm) == doctest::Approx(fm.c[0] * 3600.0 / 3785.41));
  // Hard braking never recovers fuel.
  for (double v : {0.0, 5.0, 15.0, 30.0}) CHECK(fuel_rate(v, -3.0, fm) >= fuel_rate(0.0, 0.0, fm));
  for (double v : {1.0, 10.0, 25.0}) {
    double prev = fuel_rate(v, -3.0, fm);
    for (int k = -29; k <= 30; ++k) {
      const double cur = fuel_rate(v, k * 0.1, fm);
      REQUIRE(cur >= prev);
      prev = cur;
    }
  }
}

TEST_CASE("constant-speed fuel economy matches a hand calculation") {
  const auto fm = default_fuel_model();
  const double v = 12.0;
  const auto log = steady_log(5, 200.0, v, 100);
  const double ml_per_s = fm.c[0] + fm.c[3] * v + fm.c[4] * v * v + fm.c[5] * v * v * v;
  const double miles_per_s = v / 1609.344;
  const double gallons_per_s = ml_per_s / 3785.41;
  CHECK(fuel_economy(log, fm) == doctest::Approx(miles_per_s / gallons_per_s).epsilon(1e-6));
}

TEST_CASE("fuel table validation") {
  CHECK_THROWS_AS(load_fuel_model("/nonexistent/table.csv"), std::invalid_argument);
}
