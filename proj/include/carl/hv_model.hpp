#pragma once

#include <string>
#include <vector>

#include "carl/controllers.hpp"
#include "carl/nn.hpp"
#include "carl/rng.hpp"
#include "carl/types.hpp"

namespace carl {

/// Headway below which perturbation intensity comes from the cloned driver.
inline constexpr double kImitationHeadway = 5.0;

struct DurationModel {
  double tau_min = 0.5;  // s
  double tau_max = 4.0;  // s

  double range() const { return tau_max - tau_min; }
  void validate() const;
};

/// Most common duration for an intensity: linear map from tau_max (|a| = 0) to tau_min (|a| = 3).
double duration_mode(double intensity, const DurationModel& dm);
double triangular_pdf(double tau, double mode, const DurationModel& dm);
double triangular_cdf(double tau, double mode, const DurationModel& dm);
/// Inverse-transform draw from the triangular density on [tau_min, tau_max].
double sample_duration(Rng& rng, double mode, const DurationModel& dm);

/// Default cloned-driver layout: (ego v, headway, leader v) -> acceleration.
inline const std::vector<int> kDefaultBcLayers = {3, 24, 24, 1};

struct BcRow {
  double ego_v = 0.0;
  double headway = 0.0;
  double leader_v = 0.0;
  double accel = 0.0;
};

/// Prediction clamped to [-kMaxAccel, kMaxAccel]. Throws on an untrained model.
double bc_predict(const Mlp& model, double ego_v, double headway, double leader_v);

struct BcTrainResult {
  Mlp model;
  std::vector<EpochStats> history;
};

/// Fits a z-scored MSE regressor. `validation_fraction` of rows (after a seeded shuffle) are held out.
BcTrainResult train_bc(const std::vector<BcRow>& rows, const TrainConfig& cfg,
                       const std::vector<int>& layers = kDefaultBcLayers,
                       double validation_fraction = 0.1);

/// Close-gap car-following samples from IDM plus Gaussian acceleration noise.
std::vector<BcRow> synthetic_bc_rows(std::size_t n, std::uint64_t seed, const IdmParams& idm = {},
                                     double noise_std = 0.1);

struct IntensityDraw {
  double value = 0.0;
  PerturbationSource source = PerturbationSource::Sampled;
};

/// Headway < 5 m: cloned driver (or `fallback_accel` when `bc` is null); otherwise uniform[-3, 3].
IntensityDraw sample_intensity(Rng& rng, double headway, const Mlp* bc, double ego_v, double leader_v,
                               double fallback_accel = 0.0);

struct Schedule {
  /// Start steps are fixed here; intensity and duration are drawn when each event fires.
  std::vector<PerturbationEvent> events;
  std::vector<std::string> warnings;
};

/// Events for one vehicle over [window_start, window_start + window_steps). Each event owns a
/// slot of ceil(tau_max / dt) steps so realized durations can never overlap.
Schedule sample_schedule(Rng& rng, int vehicle_id, long window_start, long window_steps, double dt,
                         const DurationModel& dm);

/// Draws intensity and duration for an event at its start step.
void fire_event(PerturbationEvent& event, Rng& rng, double headway, const Mlp* bc, double ego_v,
                double leader_v, double fallback_accel, const DurationModel& dm, double dt);

}  // namespace carl
