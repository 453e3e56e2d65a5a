#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "carl/nn.hpp"
#include "carl/sim_core.hpp"
#include "carl/types.hpp"

namespace carl {

inline constexpr double kSensingRange = 55.0;  // m
inline constexpr std::size_t kSnapshotSlots = 8;
inline constexpr std::size_t kFeatureDim = 3 * kSnapshotSlots;  // (pos, vel) pairs then masks
inline constexpr double kEmptySlot = -1.0;

struct SnapshotEntry {
  double rel_position = 0.0;  // center-to-center distance ahead of the ego, m
  double velocity = 0.0;
};

/// Vehicles ahead of an ego, nearest first.
struct SensingSnapshot {
  std::vector<SnapshotEntry> entries;
  double vehicle_length = 5.0;
};

/// Vehicles within `range` metres ahead of vehicle `index`, capped at kSnapshotSlots.
SensingSnapshot sense(const World& world, std::size_t index, double range = kSensingRange);

struct LabelRules {
  double monotone_tolerance = 0.2;  // m
  double congested_gap = 7.0;       // m
  double free_gap = 20.0;           // m
  double congested_speed_fraction = 0.2;
  double free_speed_fraction = 0.7;
};

/// Bumper gaps: ego to the first entry, then between consecutive entries.
std::vector<double> snapshot_headways(const SensingSnapshot& s);

/// Total rule-based labeling. Throws if entries are not strictly increasing in position.
CongestionLabel label_snapshot(const SensingSnapshot& s, double speed_limit, const LabelRules& rules = {});

/// Fixed 24-value layout: f0..f15 are (pos, vel) per slot with -1 padding, then 8 presence masks.
std::vector<double> encode_features(const SensingSnapshot& s);
SensingSnapshot decode_features(std::span<const double> features, double vehicle_length = 5.0);

struct DatasetOptions {
  long offset = 10;
  /// Vehicles used as observers; empty means every vehicle.
  std::vector<int> observers;
  /// Classes with fewer rows than this do not set the balancing target.
  std::size_t min_class_rows = 50;
  /// Upper bound on the transition share of each class after balancing.
  double max_transition_share = 0.5;
  bool balance = true;
  std::uint64_t seed = 0;
  LabelRules rules;
};

struct ClassifierDataset {
  Matrix features;
  std::vector<CongestionLabel> labels;
  std::vector<bool> transition;
  std::array<double, kNumLabels> class_weights{};
  std::vector<std::string> warnings;
  /// Candidate rows before balancing (after NoVehicle-transition removal).
  std::size_t candidates = 0;

  std::size_t size() const { return labels.size(); }
  std::array<std::size_t, kNumLabels> class_counts() const;
};

/// Rebuilds ring state at `step` from a log.
World world_from_log(const TrajectoryLog& log, long step, double speed_limit);

/// Unbalanced (features(t), label(t + offset)) rows from a log, NoVehicle->other rows removed.
ClassifierDataset window_log(const TrajectoryLog& log, double speed_limit, const DatasetOptions& opt);
/// Merges windowed rows, balances per class and per transition cell, and adds synthetic
/// empty-zone NoVehicle rows.
ClassifierDataset balance_dataset(const ClassifierDataset& raw, const DatasetOptions& opt);
ClassifierDataset build_dataset(const TrajectoryLog& log, double speed_limit, const DatasetOptions& opt = {});
ClassifierDataset build_dataset(const std::vector<TrajectoryLog>& logs, double speed_limit,
                                const DatasetOptions& opt = {});

void write_dataset_csv(const ClassifierDataset& d, std::ostream& out);
ClassifierDataset read_dataset_csv(std::istream& in);

inline const std::vector<int> kDefaultClassifierHidden = {32, 16, 16};

/// lr 0.01, batch 32, 50 epochs; heavy-ball SGD with a cosine decay to 1% of the initial rate.
inline TrainConfig default_classifier_train_config(std::uint64_t seed = 0) {
  TrainConfig t;
  t.learning_rate = 0.01;
  t.batch_size = 32;
  t.epochs = 50;
  t.seed = seed;
  t.optimizer = OptimizerKind::Momentum;
  t.momentum = 0.9;
  t.final_lr_fraction = 0.01;
  return t;
}

struct ClassifierOptions {
  std::vector<int> hidden = kDefaultClassifierHidden;
  double validation_fraction = 0.2;
  bool use_class_weights = true;
  /// Single-class datasets are rejected unless this is set.
  bool allow_degenerate = false;
};

struct ClassifierResult {
  Mlp model;
  std::vector<EpochStats> history;
  Batch validation;
};

ClassifierResult train_classifier(const ClassifierDataset& d, const TrainConfig& cfg,
                                  const ClassifierOptions& opt = {});

std::vector<double> predict_proba(const Mlp& classifier, const SensingSnapshot& s);
CongestionLabel predict(const Mlp& classifier, const SensingSnapshot& s);

using Confusion = std::array<std::array<std::size_t, kNumLabels>, kNumLabels>;
/// Rows are true labels, columns predictions.
Confusion confusion_matrix(const Mlp& classifier, const Batch& data);
void write_confusion_csv(const Confusion& c, std::ostream& out);

}  // namespace carl
