#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "carl/types.hpp"

namespace carl {

struct VehicleState {
  int id = 0;
  double position = 0.0;      // m along the ring, [0, ring_length)
  double velocity = 0.0;      // m/s
  double acceleration = 0.0;  // realized m/s^2 over the last step
  double length = 5.0;        // m
  ControllerKind controller = ControllerKind::Idm;
  std::optional<PerturbationEvent> active_perturbation;
};

/// Single-lane ring. Index order is spatial order: vehicle i follows vehicle i + 1 (mod n).
struct World {
  double ring_length = 0.0;
  std::vector<VehicleState> vehicles;
  long step_count = 0;
  double dt = 0.1;
  double speed_limit = 30.0;
  bool collision = false;

  std::size_t size() const { return vehicles.size(); }
  std::size_t leader_of(std::size_t i) const { return (i + 1) % vehicles.size(); }
  std::size_t follower_of(std::size_t i) const { return (i + vehicles.size() - 1) % vehicles.size(); }
};

struct RolloutConfig {
  long horizon_steps = 4500;
  long warmup_steps = 2500;
  std::uint64_t seed = 0;
  double density = 85.0;  // veh/km
  int n_vehicles = 22;
  double rv_penetration = 0.0;
  /// Binding for the robot vehicles (contiguous block starting at index 0).
  ControllerKind rv_controller = ControllerKind::Idm;
  /// Steps [perturbation_start, perturbation_end) receive human-driver perturbations.
  long perturbation_start = 2500;
  long perturbation_end = 4500;
  double dt = 0.1;
  double speed_limit = 30.0;
  double vehicle_length = 5.0;
  /// Forward shift of vehicle 0 at init; perfect symmetry is an IDM fixed point.
  double initial_displacement = 1.0;

  double ring_length() const { return n_vehicles / density * 1000.0; }
  long perturbation_steps() const { return perturbation_end - perturbation_start; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Number of robot vehicles for a penetration rate, round(n * p).
int rv_count(int n_vehicles, double penetration);

World init_ring(const RolloutConfig& config);

/// Modular distance from `from` forward to `to`, in [0, ring_length).
double forward_distance(const World& world, double from, double to);
/// Bumper-to-bumper gap (may be negative when overlapping).
double raw_gap(const World& world, std::size_t index);
/// Bumper-to-bumper gap to the immediate leader, floored at zero.
double headway(const World& world, std::size_t index);

/// Explicit Euler update. Commands are clamped to [-kMaxAccel, kMaxAccel]; velocities to
/// [0, speed_limit]. Overlaps are clipped to contact and flagged on `world.collision`.
void step(World& world, std::span<const double> accel_commands);

/// Cross-vehicle velocity standard deviation (population).
double velocity_spread(const World& world);
double mean_velocity(const World& world);

struct LogRow {
  long step = 0;
  int id = 0;
  double position = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
  double headway = 0.0;
  CongestionLabel label = CongestionLabel::Undefined;
  bool perturbed = false;
};

/// Per-vehicle, per-step record of a rollout; rows are step-major, id-minor.
struct TrajectoryLog {
  double ring_length = 0.0;
  double dt = 0.1;
  int n_vehicles = 0;
  double vehicle_length = 5.0;
  long steps = 0;
  bool collision = false;
  std::vector<LogRow> rows;
  std::vector<PerturbationEvent> events;

  const LogRow& at(long step, int id) const {
    return rows[static_cast<std::size_t>(step) * static_cast<std::size_t>(n_vehicles) +
                static_cast<std::size_t>(id)];
  }
};

inline constexpr std::string_view kLogHeader =
    "step,id,pos_m,vel_mps,acc_mps2,headway_m,label,perturbed";
inline constexpr std::string_view kScheduleHeader =
    "vehicle_id,start_step,duration_steps,intensity,source";

void write_log_csv(const TrajectoryLog& log, std::ostream& out);
/// Reads a log written by write_log_csv. Ring geometry is not stored in the CSV and must be
/// supplied by the caller.
TrajectoryLog read_log_csv(std::istream& in, double dt, double ring_length, double vehicle_length = 5.0);
void write_schedule_csv(std::span<const PerturbationEvent> events, std::ostream& out);

}  // namespace carl
