#include "carl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "carl/csv.hpp"

namespace carl {

namespace {

using T = ValueType;

std::vector<KeyDef> build_schema() {
  return {
      // ring and rollout
      {"seed", T::Int, "0", "base seed; rollout k uses seed + k"},
      {"rollouts", T::Int, "1", "rollouts per simulate/evaluate run"},
      {"n_vehicles", T::Int, "22", "vehicles on the ring"},
      {"density", T::Real, "85", "veh/km; ring length = n_vehicles / density * 1000"},
      {"horizon_steps", T::Int, "4500", "simulation horizon in steps"},
      {"warmup_steps", T::Int, "2500", "IDM-only steps before controllers engage"},
      {"dt", T::Real, "0.1", "time step, s"},
      {"speed_limit", T::Real, "30", "m/s"},
      {"vehicle_length", T::Real, "5", "m"},
      {"initial_displacement", T::Real, "1", "forward shift of vehicle 0 at init, m"},
      {"rv_type", T::Text, "idm", "robot vehicle controller: idm, fs, piws, bcm, lacc, rl"},
      {"rv_penetration", T::Real, "0", "fraction of robot vehicles"},
      {"perturbations", T::Bool, "true", "inject human-driver perturbations"},
      {"perturbation_start", T::Int, "2500", "first perturbed step"},
      {"perturbation_end", T::Int, "4500", "end of the perturbation window (exclusive)"},
      // controllers
      {"idm.a_max", T::Real, "1", ""},
      {"idm.b_comf", T::Real, "1.5", ""},
      {"idm.time_headway", T::Real, "1", ""},
      {"idm.delta", T::Real, "4", ""},
      {"idm.min_gap", T::Real, "2", ""},
      {"idm.desired_velocity", T::Real, "30", ""},
      {"fs.desired_velocity", T::Real, "4.5", "U"},
      {"fs.dx0", T::RealList, "4.5,5.25,6.0", "base offsets"},
      {"fs.decel", T::RealList, "1.5,1.0,0.5", "deceleration rates"},
      {"piws.catch_velocity", T::Real, "1", ""},
      {"piws.gap_lower", T::Real, "7", ""},
      {"piws.gap_upper", T::Real, "30", ""},
      {"piws.history_window", T::Int, "380", "steps averaged for U"},
      {"piws.beta", T::Real, "0.9", ""},
      {"bcm.k_d", T::Real, "1", ""},
      {"bcm.k_v", T::Real, "1", ""},
      {"bcm.k_c", T::Real, "1", ""},
      {"bcm.desired_velocity", T::Real, "4.5", ""},
      {"lacc.k1", T::Real, "0.3", ""},
      {"lacc.k2", T::Real, "0.4", ""},
      {"lacc.h", T::Real, "1", ""},
      {"lacc.tau", T::Real, "0.1", ""},
      {"velocity_gain", T::Real, "2", "velocity-command tracking gain, 1/s"},
      // human-driver model
      {"hv.tau_min", T::Real, "0.5", "shortest perturbation, s"},
      {"hv.tau_max", T::Real, "4", "longest perturbation, s"},
      {"hv.safe_speed", T::Bool, "true", "cap perturbed HVs at their safe velocity"},
      {"bc_model", T::Text, "", "behavioral-cloning model file"},
      {"bc.input", T::Text, "", "BC training CSV (ego_v,headway,leader_v,accel); empty: synthetic"},
      {"bc.synthetic_rows", T::Int, "4000", ""},
      {"bc.hidden", T::IntList, "24,24", ""},
      {"bc.lr", T::Real, "0.01", ""},
      {"bc.batch_size", T::Int, "32", ""},
      {"bc.epochs", T::Int, "50", ""},
      {"bc.optimizer", T::Text, "adam", "sgd, momentum or adam"},
      // congestion
      {"classifier", T::Text, "", "classifier model file"},
      {"label_mode", T::Text, "oracle", "oracle or classifier"},
      {"label.tolerance", T::Real, "0.2", "monotone headway tolerance, m"},
      {"label.congested_gap", T::Real, "7", "m"},
      {"label.free_gap", T::Real, "20", "m"},
      {"label.congested_speed_fraction", T::Real, "0.2", ""},
      {"label.free_speed_fraction", T::Real, "0.7", ""},
      {"dataset.offset", T::Int, "10", "label prediction offset, steps"},
      {"dataset.rollouts", T::Int, "6", "rollouts sampled for the classifier dataset"},
      {"dataset.density_min", T::Real, "70", "veh/km"},
      {"dataset.density_max", T::Real, "133", "veh/km"},
      {"dataset.min_class_rows", T::Int, "50", ""},
      {"dataset.max_transition_share", T::Real, "0.5", ""},
      {"classifier.hidden", T::IntList, "32,16,16", ""},
      {"classifier.lr", T::Real, "0.01", ""},
      {"classifier.batch_size", T::Int, "32", ""},
      {"classifier.epochs", T::Int, "50", ""},
      {"classifier.validation_fraction", T::Real, "0.2", ""},
      {"classifier.optimizer", T::Text, "momentum", "sgd, momentum or adam"},
      {"classifier.momentum", T::Real, "0.9", ""},
      {"classifier.final_lr_fraction", T::Real, "0.01", "cosine decay floor relative to lr; 1 disables"},
      // reinforcement learning
      {"rl.reward", T::Text, "efficiency", "efficiency, safety or follower"},
      {"rl.lr", T::Real, "5e-05", ""},
      {"rl.gamma", T::Real, "0.999", ""},
      {"rl.lambda", T::Real, "0.97", ""},
      {"rl.kl_target", T::Real, "0.02", ""},
      {"rl.entropy_start", T::Real, "0.1", ""},
      {"rl.entropy_end", T::Real, "0.01", ""},
      {"rl.value_clip", T::Real, "20", ""},
      {"rl.sgd_iterations", T::Int, "2", ""},
      {"rl.clip_ratio", T::Real, "0.2", ""},
      {"rl.iterations", T::Int, "200", ""},
      {"rl.envs", T::Int, "4", "episodes per iteration"},
      {"rl.minibatch", T::Int, "512", ""},
      {"rl.episode_steps", T::Int, "1500", "post-warmup steps per episode"},
      {"rl.hidden", T::IntList, "64,32,16", ""},
      {"rl.policy", T::Text, "", "leader policy file (rv_type rl; frozen leader for follower training)"},
      {"rl.follower_policy", T::Text, "", "follower policy file for platoons"},
      // metrics
      {"metrics.percentile", T::Real, "0", "0: instantaneous worst case"},
      {"metrics.probe_position", T::Real, "0", "m"},
      {"metrics.window_start", T::Int, "-1", "-1: perturbation_start"},
      {"metrics.window_end", T::Int, "-1", "-1: perturbation_end"},
      {"fuel_table", T::Text, "", "fuel coefficient CSV; empty: bundled table"},
      // trajectory filter
      {"filter.min_speed_fraction", T::Real, "0.1", ""},
      {"filter.max_headway", T::Real, "124", "m"},
      {"filter.min_duration", T::Real, "5", "s"},
      {"filter.max_time_gap", T::Real, "1", "s"},
      {"filter.maneuver_threshold", T::Real, "0.3", "m/s^2"},
      // io
      {"input", T::Text, "", "input file"},
      {"out", T::Text, "out", "output directory"},
  };
}

const KeyDef& lookup(const std::string& key) {
  const auto& schema = config_schema();
  const auto it = std::find_if(schema.begin(), schema.end(), [&](const KeyDef& d) { return d.key == key; });
  if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

void check_value(const KeyDef& def, const std::string& value) {
  try {
    switch (def.type) {
      case T::Int: csv::to_long(value); break;
      case T::Real: csv::to_double(value); break;
      case T::Bool:
        if (value != "true" && value != "false" && value != "1" && value != "0") {
          throw std::invalid_argument("expected true/false");
        }
        break;
      case T::RealList:
        for (auto f : csv::split(value)) csv::to_double(f);
        break;
      case T::IntList:
        for (auto f : csv::split(value)) csv::to_long(f);
        break;
      case T::Text: break;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad value for '" + def.key + "': " + e.what());
  }
}

template <typename F>
auto checked(F f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

}  // namespace

const std::vector<KeyDef>& config_schema() {
  static const std::vector<KeyDef> schema = build_schema();
  return schema;
}

std::string env_name(const std::string& key) {
  std::string name(kEnvPrefix);
  for (char ch : key) name += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& d : config_schema()) values_[d.key] = d.default_value;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& def = lookup(key);
  const std::string v(csv::trim(value));
  check_value(def, v);
  values_[key] = v;
}

void ExperimentConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (csv::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(csv::trim(std::string_view(line).substr(0, eq)));
    try {
      set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  load_text(buffer.str(), path);
}

void ExperimentConfig::load_env() {
  for (const auto& d : config_schema()) {
    if (const char* v = std::getenv(env_name(d.key).c_str())) set(d.key, v);
  }
}

const std::string& ExperimentConfig::raw(const std::string& key) const {
  lookup(key);
  return values_.at(key);
}

long ExperimentConfig::get_int(const std::string& key) const { return csv::to_long(raw(key)); }
double ExperimentConfig::get_real(const std::string& key) const { return csv::to_double(raw(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const {
  const auto& v = raw(key);
  return v == "true" || v == "1";
}

std::vector<double> ExperimentConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (auto f : csv::split(raw(key))) out.push_back(csv::to_double(f));
  return out;
}

std::vector<int> ExperimentConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  if (csv::trim(raw(key)).empty()) return out;
  for (auto f : csv::split(raw(key))) out.push_back(static_cast<int>(csv::to_long(f)));
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

RolloutConfig rollout_config(const ExperimentConfig& c) {
  return checked([&] {
    RolloutConfig r;
    r.seed = static_cast<std::uint64_t>(c.get_int("seed"));
    r.n_vehicles = static_cast<int>(c.get_int("n_vehicles"));
    r.density = c.get_real("density");
    r.horizon_steps = c.get_int("horizon_steps");
    r.warmup_steps = c.get_int("warmup_steps");
    r.dt = c.get_real("dt");
    r.speed_limit = c.get_real("speed_limit");
    r.vehicle_length = c.get_real("vehicle_length");
    r.initial_displacement = c.get_real("initial_displacement");
    r.rv_penetration = c.get_real("rv_penetration");
    r.perturbation_start = c.get_int("perturbation_start");
    r.perturbation_end = c.get_int("perturbation_end");
    const auto kind = parse_controller_kind(c.get_text("rv_type"));
    r.rv_controller = kind;
    if (kind != ControllerKind::Idm && rv_count(r.n_vehicles, r.rv_penetration) == 0) {
      throw ConfigError("rv_type '" + c.get_text("rv_type") + "' needs rv_penetration yielding at least one RV");
    }
    r.validate();
    return r;
  });
}

ControllerSuite controller_suite(const ExperimentConfig& c) {
  return checked([&] {
    ControllerSuite s;
    s.idm = {c.get_real("idm.a_max"), c.get_real("idm.b_comf"), c.get_real("idm.time_headway"),
             c.get_real("idm.delta"), c.get_real("idm.min_gap"), c.get_real("idm.desired_velocity")};
    s.idm.validate();
    const auto dx0 = c.get_reals("fs.dx0");
    const auto dk = c.get_reals("fs.decel");
    if (dx0.size() != 3 || dk.size() != 3) throw ConfigError("fs.dx0 and fs.decel need three values");
    s.fs.desired_velocity = c.get_real("fs.desired_velocity");
    std::copy(dx0.begin(), dx0.end(), s.fs.base_offsets.begin());
    std::copy(dk.begin(), dk.end(), s.fs.decel_rates.begin());
    s.fs.validate();
    s.piws = {c.get_real("piws.catch_velocity"), c.get_real("piws.gap_lower"), c.get_real("piws.gap_upper"),
              static_cast<int>(c.get_int("piws.history_window")), c.get_real("piws.beta")};
    s.piws.validate();
    s.bcm = {c.get_real("bcm.k_d"), c.get_real("bcm.k_v"), c.get_real("bcm.k_c"), c.get_real("bcm.desired_velocity")};
    s.lacc = {c.get_real("lacc.k1"), c.get_real("lacc.k2"), c.get_real("lacc.h"), c.get_real("lacc.tau")};
    if (!(s.lacc.tau > 0)) throw ConfigError("lacc.tau must be > 0");
    s.velocity_gain = c.get_real("velocity_gain");
    return s;
  });
}

DurationModel duration_model(const ExperimentConfig& c) {
  return checked([&] {
    DurationModel d{c.get_real("hv.tau_min"), c.get_real("hv.tau_max")};
    d.validate();
    return d;
  });
}

LabelRules label_rules(const ExperimentConfig& c) {
  return {c.get_real("label.tolerance"), c.get_real("label.congested_gap"), c.get_real("label.free_gap"),
          c.get_real("label.congested_speed_fraction"), c.get_real("label.free_speed_fraction")};
}

DatasetOptions dataset_options(const ExperimentConfig& c) {
  DatasetOptions o;
  o.offset = c.get_int("dataset.offset");
  o.min_class_rows = static_cast<std::size_t>(c.get_int("dataset.min_class_rows"));
  o.max_transition_share = c.get_real("dataset.max_transition_share");
  o.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  o.rules = label_rules(c);
  return o;
}

TrainConfig classifier_train_config(const ExperimentConfig& c) {
  return checked([&] {
    auto t = default_classifier_train_config(static_cast<std::uint64_t>(c.get_int("seed")));
    t.learning_rate = c.get_real("classifier.lr");
    t.batch_size = static_cast<int>(c.get_int("classifier.batch_size"));
    t.epochs = static_cast<int>(c.get_int("classifier.epochs"));
    t.optimizer = parse_optimizer(c.get_text("classifier.optimizer"));
    t.momentum = c.get_real("classifier.momentum");
    t.final_lr_fraction = c.get_real("classifier.final_lr_fraction");
    t.validate();
    return t;
  });
}

ClassifierOptions classifier_options(const ExperimentConfig& c) {
  ClassifierOptions o;
  o.hidden = c.get_ints("classifier.hidden");
  o.validation_fraction = c.get_real("classifier.validation_fraction");
  return o;
}

TrainConfig bc_train_config(const ExperimentConfig& c) {
  return checked([&] {
    TrainConfig t;
    t.learning_rate = c.get_real("bc.lr");
    t.batch_size = static_cast<int>(c.get_int("bc.batch_size"));
    t.epochs = static_cast<int>(c.get_int("bc.epochs"));
    t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
    t.optimizer = parse_optimizer(c.get_text("bc.optimizer"));
    t.validate();
    return t;
  });
}

PpoConfig ppo_config(const ExperimentConfig& c) {
  return checked([&] {
    PpoConfig p;
    p.learning_rate = c.get_real("rl.lr");
    p.gamma = c.get_real("rl.gamma");
    p.lambda = c.get_real("rl.lambda");
    p.kl_target = c.get_real("rl.kl_target");
    p.entropy_start = c.get_real("rl.entropy_start");
    p.entropy_end = c.get_real("rl.entropy_end");
    p.value_clip = c.get_real("rl.value_clip");
    p.sgd_iterations = static_cast<int>(c.get_int("rl.sgd_iterations"));
    p.clip_ratio = c.get_real("rl.clip_ratio");
    p.iterations = static_cast<int>(c.get_int("rl.iterations"));
    p.envs_per_iteration = static_cast<int>(c.get_int("rl.envs"));
    p.minibatch_size = static_cast<int>(c.get_int("rl.minibatch"));
    p.hidden = c.get_ints("rl.hidden");
    p.seed = static_cast<std::uint64_t>(c.get_int("seed"));
    p.validate();
    return p;
  });
}

FilterParams filter_params(const ExperimentConfig& c) {
  FilterParams p;
  p.speed_limit = c.get_real("speed_limit");
  p.min_speed_fraction = c.get_real("filter.min_speed_fraction");
  p.max_headway = c.get_real("filter.max_headway");
  p.min_duration = c.get_real("filter.min_duration");
  p.max_time_gap = c.get_real("filter.max_time_gap");
  return p;
}

MetricsOptions metrics_options(const ExperimentConfig& c) {
  MetricsOptions o;
  const long start = c.get_int("metrics.window_start");
  const long end = c.get_int("metrics.window_end");
  o.window.start = start < 0 ? c.get_int("perturbation_start") : start;
  o.window.end = end < 0 ? c.get_int("perturbation_end") : end;
  o.percentile = c.get_real("metrics.percentile");
  if (o.percentile < 0 || o.percentile >= 50) throw ConfigError("metrics.percentile must lie in [0, 50)");
  o.probe_position = c.get_real("metrics.probe_position");
  return o;
}

}  // namespace carl
