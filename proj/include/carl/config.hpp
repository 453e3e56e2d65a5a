#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "carl/congestion.hpp"
#include "carl/data_pipeline.hpp"
#include "carl/hv_model.hpp"
#include "carl/metrics.hpp"
#include "carl/ppo.hpp"
#include "carl/rollout.hpp"

namespace carl {

/// Thrown for schema violations: unknown keys, malformed values, inconsistent settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ValueType : std::uint8_t { Int, Real, Bool, Text, RealList, IntList };

struct KeyDef {
  std::string key;
  ValueType type;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default.
const std::vector<KeyDef>& config_schema();

inline constexpr std::string_view kEnvPrefix = "CARL_";

/// Flat key = value configuration. Precedence: defaults < file < environment < explicit sets.
class ExperimentConfig {
 public:
  ExperimentConfig();

  /// Parses `key = value` lines; '#' starts a comment.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// Applies CARL_<KEY> variables (dots become underscores, upper case).
  void load_env();
  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_text(const std::string& key) const { return raw(key); }
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  nlohmann::json to_json() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Name of the environment variable that overrides `key`.
std::string env_name(const std::string& key);

RolloutConfig rollout_config(const ExperimentConfig& c);
ControllerSuite controller_suite(const ExperimentConfig& c);
DurationModel duration_model(const ExperimentConfig& c);
LabelRules label_rules(const ExperimentConfig& c);
DatasetOptions dataset_options(const ExperimentConfig& c);
TrainConfig classifier_train_config(const ExperimentConfig& c);
ClassifierOptions classifier_options(const ExperimentConfig& c);
TrainConfig bc_train_config(const ExperimentConfig& c);
PpoConfig ppo_config(const ExperimentConfig& c);
FilterParams filter_params(const ExperimentConfig& c);
MetricsOptions metrics_options(const ExperimentConfig& c);

}  // namespace carl
