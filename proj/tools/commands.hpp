#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/config.hpp"

namespace carl::app {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Flag values; anything set here overrides the config file and the environment.
struct Overrides {
  std::string config_path;
  std::optional<long> seed;
  std::optional<long> rollouts;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::vector<std::string> sets;  // key=value
  bool use_env = true;
};

/// defaults < config file < CARL_* environment < --set < dedicated flags.
ExperimentConfig resolve_config(const Overrides& o);

/// Files written by a command, keyed by their path relative to the output directory.
struct Artifacts {
  std::string out_dir;
  std::vector<std::string> files;

  std::string path(const std::string& name);
};

std::string sha256_file(const std::string& path);
/// Writes manifest.json: command, resolved config, seed, artifact hashes, extra fields.
void write_manifest(const std::string& command, const ExperimentConfig& c, const Artifacts& a,
                    const nlohmann::json& extra = {});

/// Rollout context assembled from the config. Loaded models are owned by the returned bundle.
struct SimulationSetup {
  RolloutConfig rollout;
  RolloutContext context;
  Mlp bc_model;
  Mlp classifier;
  GaussianPolicy leader;
  GaussianPolicy follower;
  std::vector<int> rv_ids;
  std::vector<std::string> warnings;
};

/// Throws ConfigError for missing model files or inconsistent settings.
void build_setup(const ExperimentConfig& c, SimulationSetup& s);

/// All-IDM perturbed rollouts at densities evenly spaced over [dataset.density_min, dataset.density_max].
std::vector<TrajectoryLog> classifier_corpus(const ExperimentConfig& c);

int cmd_simulate(const ExperimentConfig& c);
int cmd_evaluate(const ExperimentConfig& c);
int cmd_train_bc(const ExperimentConfig& c);
int cmd_train_classifier(const ExperimentConfig& c);
int cmd_train_rl(const ExperimentConfig& c);
int cmd_filter_data(const ExperimentConfig& c);

/// Full command-line entry point; maps exceptions to exit codes.
int run(int argc, const char* const* argv);

}  // namespace carl::app
