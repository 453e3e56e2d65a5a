#pragma once

#include <functional>
#include <string>
#include <vector>

#include "carl/congestion.hpp"
#include "carl/controllers.hpp"
#include "carl/hv_model.hpp"
#include "carl/rng.hpp"
#include "carl/sim_core.hpp"

namespace carl {

enum class LabelMode : std::uint8_t { Oracle, Classifier };

/// Acceleration for a Policy-bound vehicle at `index`.
using PolicyFn = std::function<double(const World& world, std::size_t index)>;

/// Everything a rollout needs besides the ring configuration. Model pointers are borrowed.
struct RolloutContext {
  ControllerSuite controllers;
  DurationModel durations;
  bool perturbations = true;
  const Mlp* bc_model = nullptr;
  const Mlp* classifier = nullptr;
  LabelMode label_mode = LabelMode::Oracle;
  LabelRules label_rules;
  PolicyFn policy;
  bool record_log = true;
  /// Perturbed HVs never exceed their Krauss safe velocity.
  bool perturbation_safe_speed = true;
};

/// Step-wise ring rollout: IDM for everyone during warmup, bound controllers afterwards, and
/// human-driver perturbations inside the configured window.
class RingSimulation {
 public:
  RingSimulation(const RolloutConfig& config, const RolloutContext& context);

  const World& world() const { return world_; }
  const RolloutConfig& config() const { return config_; }
  int n_rv() const { return n_rv_; }
  bool done() const { return world_.step_count >= config_.horizon_steps; }
  bool controlling() const { return world_.step_count >= config_.warmup_steps; }

  /// Advances one step. `rv_actions`, when given after warmup, overrides the first n_rv commands.
  void advance(std::span<const double> rv_actions = {});
  /// Runs until the horizon.
  void run();

  /// Label of the zone ahead of `index` in the current state under the context's label mode.
  CongestionLabel label_of(std::size_t index) const;
  /// Commanded (pre-integration) acceleration of each vehicle at the last step.
  const std::vector<double>& last_commands() const { return commands_; }

  const std::vector<std::string>& warnings() const { return warnings_; }
  TrajectoryLog take_log();

 private:
  double perturbation_accel(std::size_t index);

  RolloutConfig config_;
  RolloutContext context_;
  World world_;
  int n_rv_ = 0;
  std::vector<VehicleController> controllers_;
  std::vector<Rng> hv_rngs_;
  std::vector<std::vector<PerturbationEvent>> schedules_;
  std::vector<std::size_t> next_event_;
  std::vector<double> commands_;
  std::vector<std::string> warnings_;
  TrajectoryLog log_;
  bool warned_no_bc_ = false;
};

TrajectoryLog run_rollout(const RolloutConfig& config, const RolloutContext& context);

/// Independent rollouts with seeds config.seed + k, fanned out across threads.
std::vector<TrajectoryLog> run_rollouts(const RolloutConfig& config, const RolloutContext& context, int n);
std::vector<TrajectoryLog> run_rollouts_serial(const RolloutConfig& config, const RolloutContext& context, int n);

/// Cross-vehicle velocity standard deviation at each logged step.
std::vector<double> velocity_spread_series(const TrajectoryLog& log);

}  // namespace carl
