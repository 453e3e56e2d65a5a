#include "carl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "carl/csv.hpp"

namespace carl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::pair<long, long> resolve(const TrajectoryLog& log, MetricsWindow w) {
  const long end = w.end < 0 ? log.steps : std::min(w.end, log.steps);
  if (w.start < 0 || w.start > end) throw std::invalid_argument("metrics window outside the log");
  return {w.start, end};
}

double percentile_of(std::vector<double>& v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  if (std::isinf(v[lo]) || std::isinf(v[hi])) return v[hi];
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json stat_json(const Stat& s) { return {{"mean", number(s.mean)}, {"std", number(s.std)}}; }

}  // namespace

double ttc(double gap, double closing_speed) {
  if (closing_speed <= 0.0) return kInf;
  return std::max(gap, 0.0) / closing_speed;
}

double drac(double gap, double closing_speed, bool* collision) {
  if (closing_speed <= 0.0) return 0.0;
  if (gap <= 0.0) {
    if (collision) *collision = true;
    return kInf;
  }
  return closing_speed * closing_speed / (2.0 * gap);
}

double FuelModel::rate_ml_per_s(double v, double a) const {
  const double raw = c[0] + c[1] * a * v + c[2] * a * a * v + c[3] * v + c[4] * v * v + c[5] * v * v * v;
  return std::max(c[0], raw);
}

FuelModel load_fuel_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("missing fuel coefficient table " + path);
  std::string line;
  do {
    if (!std::getline(in, line)) throw std::invalid_argument("empty fuel coefficient table");
  } while (csv::trim(line).empty() || csv::trim(line).front() == '#');
  const csv::Header header(line);
  const auto name_col = header.require("coefficient");
  const auto value_col = header.require("value");
  FuelModel m;
  m.name = path;
  std::array<bool, 6> seen{};
  while (std::getline(in, line)) {
    if (csv::trim(line).empty() || csv::trim(line).front() == '#') continue;
    const auto f = csv::split(line);
    if (f.size() < header.size()) throw std::invalid_argument("fuel table: short row '" + line + "'");
    const auto key = f[name_col];
    if (key.size() != 2 || key[0] != 'c' || key[1] < '0' || key[1] > '5') {
      throw std::invalid_argument("fuel table: unknown coefficient '" + std::string(key) + "'");
    }
    const auto k = static_cast<std::size_t>(key[1] - '0');
    m.c[k] = csv::to_double(f[value_col]);
    seen[k] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("fuel table must define c0..c5");
  }
  if (!(m.c[0] > 0.0)) throw std::invalid_argument("fuel table: idle rate c0 must be > 0");
  return m;
}

FuelModel default_fuel_model() { return load_fuel_model(std::string(CARL_DATA_DIR) + "/fuel_pc_g_eu4_surrogate.csv"); }

double fuel_rate(double v, double a, const FuelModel& m) { return m.rate_ml_per_s(v, a) * 3600.0 / kMlPerGallon; }

double fuel_economy(const TrajectoryLog& log, const FuelModel& m, MetricsWindow w) {
  const auto [start, end] = resolve(log, w);
  double meters = 0.0;
  double gallons = 0.0;
  for (long t = start; t < end; ++t) {
    for (int i = 0; i < log.n_vehicles; ++i) {
      const auto& r = log.at(t, i);
      meters += r.velocity * log.dt;
      gallons += fuel_rate(r.velocity, r.acceleration, m) * log.dt / 3600.0;
    }
  }
  if (gallons <= 0.0) return 0.0;
  return meters / kMetersPerMile / gallons;
}

double throughput(const TrajectoryLog& log, double probe_position, MetricsWindow w) {
  const auto [start, end] = resolve(log, w);
  if (end - start < 2) return 0.0;
  World ring;
  ring.ring_length = log.ring_length;
  long crossings = 0;
  for (long t = start; t + 1 < end; ++t) {
    for (int i = 0; i < log.n_vehicles; ++i) {
      const double x0 = log.at(t, i).position;
      const double moved = forward_distance(ring, x0, log.at(t + 1, i).position);
      const double to_probe = forward_distance(ring, x0, probe_position);
      if (to_probe > 0.0 && to_probe <= moved) ++crossings;
    }
  }
  const double hours = static_cast<double>(end - start - 1) * log.dt / 3600.0;
  return static_cast<double>(crossings) / hours;
}

RolloutMetrics rollout_metrics(const TrajectoryLog& log, const std::vector<int>& vehicles, const FuelModel& m,
                               const MetricsOptions& opt) {
  const auto [start, end] = resolve(log, opt.window);
  std::vector<int> ids = vehicles;
  if (ids.empty()) {
    for (int i = 0; i < log.n_vehicles; ++i) ids.push_back(i);
  }
  RolloutMetrics r;
  r.collision = log.collision;
  r.ttc = kInf;
  r.drac = 0.0;
  std::vector<double> ttcs, dracs;
  for (long t = start; t < end; ++t) {
    for (int i : ids) {
      if (i < 0 || i >= log.n_vehicles) throw std::invalid_argument("vehicle id outside the log");
      const auto& ego = log.at(t, i);
      const auto& lead = log.at(t, (i + 1) % log.n_vehicles);
      const double closing = ego.velocity - lead.velocity;
      bool hit = false;
      const double t_val = ttc(ego.headway, closing);
      const double d_val = drac(ego.headway, closing, &hit);
      r.collision = r.collision || hit;
      r.ttc = std::min(r.ttc, t_val);
      r.drac = std::max(r.drac, d_val);
      if (opt.percentile > 0.0) {
        ttcs.push_back(t_val);
        dracs.push_back(d_val);
      }
    }
  }
  if (opt.percentile > 0.0 && !ttcs.empty()) {
    r.ttc = percentile_of(ttcs, opt.percentile);
    r.drac = percentile_of(dracs, 100.0 - opt.percentile);
  }
  r.fuel_economy = fuel_economy(log, m, opt.window);
  r.throughput = throughput(log, opt.probe_position, opt.window);
  return r;
}

Stat summarize(std::vector<double> values) {
  Stat s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (std::isinf(s.mean)) return s;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

MetricsReport report(const std::vector<TrajectoryLog>& logs, const std::vector<int>& rv_ids, const FuelModel& m,
                     const MetricsOptions& opt) {
  if (logs.empty()) throw std::invalid_argument("report needs at least one rollout");
  MetricsReport rep;
  rep.vehicles = rv_ids;
  std::vector<double> t, d, fe, tp;
  for (const auto& log : logs) {
    const auto r = rollout_metrics(log, rv_ids, m, opt);
    rep.rollouts.push_back(r);
    rep.collisions += r.collision ? 1 : 0;
    t.push_back(r.ttc);
    d.push_back(r.drac);
    fe.push_back(r.fuel_economy);
    tp.push_back(r.throughput);
  }
  rep.ttc_worst_rv = summarize(t);
  rep.drac_worst_rv = summarize(d);
  rep.fuel_economy = summarize(fe);
  rep.throughput = summarize(tp);
  return rep;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ttc_worst_rv_s"] = stat_json(r.ttc_worst_rv);
  j["drac_worst_rv_mps2"] = stat_json(r.drac_worst_rv);
  j["fuel_economy_mpg"] = stat_json(r.fuel_economy);
  j["throughput_veh_per_h"] = stat_json(r.throughput);
  j["n_rollouts"] = r.rollouts.size();
  j["collisions"] = r.collisions;
  j["worst_case_over"] = r.vehicles.empty() ? nlohmann::json("all") : nlohmann::json(r.vehicles);
  auto& per = j["rollouts"] = nlohmann::json::array();
  for (const auto& x : r.rollouts) {
    per.push_back({{"ttc", number(x.ttc)},
                   {"drac", number(x.drac)},
                   {"fuel_economy", number(x.fuel_economy)},
                   {"throughput", number(x.throughput)},
                   {"collision", x.collision}});
  }
  return j;
}

void write_report_csv_row(const MetricsReport& r, std::string_view rv_type, double penetration, std::ostream& out) {
  out << rv_type << ',' << csv::fmt(penetration) << ',' << csv::fmt(r.ttc_worst_rv.mean) << ','
      << csv::fmt(r.ttc_worst_rv.std) << ',' << csv::fmt(r.drac_worst_rv.mean) << ','
      << csv::fmt(r.drac_worst_rv.std) << ',' << csv::fmt(r.fuel_economy.mean) << ','
      << csv::fmt(r.fuel_economy.std) << ',' << csv::fmt(r.throughput.mean) << ',' << csv::fmt(r.throughput.std)
      << '\n';
}

}  // namespace carl
