#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/hv_model.hpp"
#include "carl/nn.hpp"
#include "carl/sim_core.hpp"

namespace carl {

/// One row of the trajectory schema
/// `time,vehicle_id,lane_id,position,velocity[,leader_id][,space_headway][,acceleration]`.
struct TrajectoryRecord {
  double time = 0.0;
  long vehicle_id = 0;
  long lane_id = 0;
  double position = 0.0;
  double velocity = 0.0;
  std::optional<long> leader_id;
  std::optional<double> space_headway;
  double acceleration = 0.0;
  bool acceleration_derived = false;
};

struct LoadResult {
  /// Sorted by (vehicle_id, time).
  std::vector<TrajectoryRecord> records;
  std::vector<std::string> warnings;
};

/// Vehicle length used when headway must be recomputed from positions.
inline constexpr double kDefaultVehicleLength = 5.0;

LoadResult load_trajectories(std::istream& in, double vehicle_length = kDefaultVehicleLength);
LoadResult load_trajectories(const std::string& path, double vehicle_length = kDefaultVehicleLength);
void write_trajectories_csv(const std::vector<TrajectoryRecord>& records, std::ostream& out);

struct FilterParams {
  double speed_limit = 30.0;
  double min_speed_fraction = 0.1;  // strict
  double max_headway = 124.0;       // strict
  double min_duration = 5.0;        // inclusive
  double max_time_gap = 1.0;        // larger gaps split a run
};

struct FollowingSample {
  double time = 0.0;
  double ego_v = 0.0;
  double headway = 0.0;
  double leader_v = 0.0;
  double ego_accel = 0.0;
};

struct CarFollowingSegment {
  long ego_id = 0;
  long leader_id = 0;
  long lane_id = 0;
  std::vector<FollowingSample> samples;

  double start_time() const { return samples.front().time; }
  double end_time() const { return samples.back().time; }
  double duration() const { return end_time() - start_time(); }
};

/// True when a record satisfies the per-sample criteria (leader present in the same lane,
/// speed above the floor, headway below the ceiling).
bool sample_qualifies(const TrajectoryRecord& r, const TrajectoryRecord* leader, const FilterParams& p);

/// Maximal contiguous qualifying runs with a constant leader and lane lasting at least min_duration.
std::vector<CarFollowingSegment> car_following_filter(const std::vector<TrajectoryRecord>& records,
                                                      const FilterParams& p = {});

/// Ego rows of every segment plus the leader rows they reference; filtering this corpus again
/// reproduces the same segments.
std::vector<TrajectoryRecord> filtered_records(const std::vector<TrajectoryRecord>& records,
                                               const FilterParams& p = {});

struct BcDataset {
  std::vector<BcRow> rows;
  Normalizer stats;
};

BcDataset extract_bc_dataset(const std::vector<CarFollowingSegment>& segments);

struct Maneuver {
  long ego_id = 0;
  double start_time = 0.0;
  double duration = 0.0;
  double intensity = 0.0;  // signed peak acceleration
};

struct PerturbationStats {
  std::vector<Maneuver> maneuvers;
  double observed_seconds = 0.0;
  double per_six_minutes = 0.0;
  double mean_abs_intensity = 0.0;
  double mean_duration = 0.0;
  /// Pearson correlation of |intensity| with duration; NaN with fewer than two maneuvers.
  double intensity_duration_correlation = 0.0;
};

PerturbationStats characterize_perturbations(const std::vector<CarFollowingSegment>& segments,
                                             double threshold = 0.3);

void write_segments_csv(const std::vector<CarFollowingSegment>& segments, std::ostream& out);
void write_bc_csv(const std::vector<BcRow>& rows, std::ostream& out);
std::vector<BcRow> read_bc_csv(std::istream& in);
nlohmann::json to_json(const PerturbationStats& s);

/// Converts a ring log to the trajectory schema (single lane, unwrapped positions, explicit headway).
std::vector<TrajectoryRecord> records_from_log(const TrajectoryLog& log, long lane_id = 1);

}  // namespace carl
