#include "carl/sim_core.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "carl/csv.hpp"

namespace carl {

void RolloutConfig::validate() const {
  if (n_vehicles < 2) throw std::invalid_argument("n_vehicles must be >= 2");
  if (!(density > 0.0)) throw std::invalid_argument("density must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(speed_limit > 0.0)) throw std::invalid_argument("speed_limit must be > 0");
  if (!(vehicle_length > 0.0)) throw std::invalid_argument("vehicle_length must be > 0");
  if (ring_length() <= n_vehicles * vehicle_length) {
    throw std::invalid_argument("ring of " + std::to_string(ring_length()) +
                                " m cannot hold the vehicles' total length");
  }
  if (horizon_steps <= 0) throw std::invalid_argument("horizon_steps must be > 0");
  if (warmup_steps < 0 || warmup_steps >= horizon_steps) {
    throw std::invalid_argument("warmup_steps must lie in [0, horizon_steps)");
  }
  if (rv_penetration < 0.0 || rv_penetration > 1.0) {
    throw std::invalid_argument("rv_penetration must lie in [0, 1]");
  }
  if (perturbation_start < 0 || perturbation_end < perturbation_start) {
    throw std::invalid_argument("perturbation window must satisfy 0 <= start <= end");
  }
}

int rv_count(int n_vehicles, double penetration) {
  return static_cast<int>(std::lround(n_vehicles * penetration));
}

World init_ring(const RolloutConfig& config) {
  config.validate();
  World world;
  world.ring_length = config.ring_length();
  world.dt = config.dt;
  world.speed_limit = config.speed_limit;
  const int n = config.n_vehicles;
  const int n_rv = rv_count(n, config.rv_penetration);
  const double spacing = world.ring_length / n;
  world.vehicles.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& v = world.vehicles[static_cast<std::size_t>(i)];
    v.id = i;
    v.position = i * spacing;
    v.length = config.vehicle_length;
    v.controller = i < n_rv ? config.rv_controller : ControllerKind::Idm;
  }
  if (config.initial_displacement != 0.0) {
    if (std::abs(config.initial_displacement) >= spacing - config.vehicle_length) {
      throw std::invalid_argument("initial_displacement exceeds the free gap");
    }
    auto& first = world.vehicles.front();
    first.position = std::fmod(first.position + config.initial_displacement + world.ring_length,
                               world.ring_length);
  }
  return world;
}

double forward_distance(const World& world, double from, double to) {
  double d = std::fmod(to - from, world.ring_length);
  if (d < 0.0) d += world.ring_length;
  return d;
}

double raw_gap(const World& world, std::size_t index) {
  const auto& ego = world.vehicles[index];
  const auto& lead = world.vehicles[world.leader_of(index)];
  return forward_distance(world, ego.position, lead.position) - lead.length;
}

double headway(const World& world, std::size_t index) { return std::max(0.0, raw_gap(world, index)); }

void step(World& world, std::span<const double> accel_commands) {
  const std::size_t n = world.size();
  if (accel_commands.size() != n) {
    throw std::invalid_argument("step: expected one acceleration command per vehicle");
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = world.vehicles[i];
    const double command = std::clamp(accel_commands[i], -kMaxAccel, kMaxAccel);
    const double next_velocity = std::clamp(v.velocity + command * world.dt, 0.0, world.speed_limit);
    v.acceleration = (next_velocity - v.velocity) / world.dt;
    v.velocity = next_velocity;
    v.position = std::fmod(v.position + next_velocity * world.dt, world.ring_length);
  }
  // Clip overlaps to contact. A clipped vehicle can push its own follower into overlap,
  // so sweep until the ring is consistent.
  for (std::size_t pass = 0; pass < n; ++pass) {
    bool clipped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (raw_gap(world, i) < 0.0) {
        auto& ego = world.vehicles[i];
        const auto& lead = world.vehicles[world.leader_of(i)];
        ego.position = std::fmod(lead.position - lead.length + world.ring_length, world.ring_length);
        ego.velocity = std::min(ego.velocity, lead.velocity);
        world.collision = true;
        clipped = true;
      }
    }
    if (!clipped) break;
  }
  ++world.step_count;
}

double mean_velocity(const World& world) {
  double sum = 0.0;
  for (const auto& v : world.vehicles) sum += v.velocity;
  return sum / static_cast<double>(world.size());
}

double velocity_spread(const World& world) {
  const double mean = mean_velocity(world);
  double acc = 0.0;
  for (const auto& v : world.vehicles) acc += (v.velocity - mean) * (v.velocity - mean);
  return std::sqrt(acc / static_cast<double>(world.size()));
}

void write_log_csv(const TrajectoryLog& log, std::ostream& out) {
  out << kLogHeader << '\n';
  for (const auto& row : log.rows) {
    out << row.step << ',' << row.id << ',' << csv::fmt(row.position) << ','
        << csv::fmt(row.velocity) << ',' << csv::fmt(row.acceleration) << ','
        << csv::fmt(row.headway) << ',' << to_string(row.label) << ',' << (row.perturbed ? 1 : 0)
        << '\n';
  }
}

TrajectoryLog read_log_csv(std::istream& in, double dt, double ring_length, double vehicle_length) {
  if (!(ring_length > 0.0)) throw std::invalid_argument("read_log_csv: ring_length must be > 0");
  TrajectoryLog log;
  log.dt = dt;
  log.ring_length = ring_length;
  log.vehicle_length = vehicle_length;
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != kLogHeader) {
    throw std::invalid_argument("trajectory log: unexpected header");
  }
  long line_no = 1;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 8) {
      throw std::invalid_argument("trajectory log line " + std::to_string(line_no) +
                                  ": expected 8 fields");
    }
    LogRow row;
    try {
      row.step = csv::to_long(f[0]);
      row.id = static_cast<int>(csv::to_long(f[1]));
      row.position = csv::to_double(f[2]);
      row.velocity = csv::to_double(f[3]);
      row.acceleration = csv::to_double(f[4]);
      row.headway = csv::to_double(f[5]);
      row.label = parse_label(f[6]);
      row.perturbed = csv::to_long(f[7]) != 0;
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("trajectory log line " + std::to_string(line_no) + ": " + e.what());
    }
    max_id = std::max(max_id, row.id);
    log.rows.push_back(row);
  }
  log.n_vehicles = max_id + 1;
  if (log.n_vehicles > 0) {
    if (log.rows.size() % static_cast<std::size_t>(log.n_vehicles) != 0) {
      throw std::invalid_argument("trajectory log: row count is not a multiple of vehicle count");
    }
    log.steps = static_cast<long>(log.rows.size() / static_cast<std::size_t>(log.n_vehicles));
    for (std::size_t k = 0; k < log.rows.size(); ++k) {
      const auto& row = log.rows[k];
      if (row.id != static_cast<int>(k % static_cast<std::size_t>(log.n_vehicles)) ||
          row.step != log.rows[k - k % static_cast<std::size_t>(log.n_vehicles)].step) {
        throw std::invalid_argument("trajectory log: rows must be step-major and id-minor");
      }
    }
  }
  return log;
}

void write_schedule_csv(std::span<const PerturbationEvent> events, std::ostream& out) {
  out << kScheduleHeader << '\n';
  for (const auto& e : events) {
    out << e.vehicle_id << ',' << e.start_step << ',' << e.duration_steps << ','
        << csv::fmt(e.intensity) << ',' << to_string(e.source) << '\n';
  }
}

}  // namespace carl
