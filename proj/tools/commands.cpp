#include "commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "carl/csv.hpp"

namespace fs = std::filesystem;

namespace carl::app {

namespace {

std::string numbered(const char* stem, long k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03ld.%s", stem, k, ext);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return nlohmann::json::parse(in);
}

void require_file(const std::string& key, const std::string& path) {
  if (!fs::exists(path)) throw ConfigError(key + ": file not found: " + path);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void write_policy(const GaussianPolicy& p, const std::string& path) {
  auto out = open_out(path);
  out << to_json(p).dump(1) << '\n';
}

GaussianPolicy load_policy(const std::string& key, const std::string& path) {
  require_file(key, path);
  return policy_from_json(read_json_file(path));
}

void write_epoch_csv(const std::vector<EpochStats>& history, bool with_accuracy, std::ostream& out) {
  out << "epoch,train_loss,val_loss";
  if (with_accuracy) out << ",train_accuracy,val_accuracy";
  out << '\n';
  for (const auto& e : history) {
    out << e.epoch << ',' << csv::fmt(e.train_loss) << ',' << csv::fmt(e.val_loss);
    if (with_accuracy) out << ',' << csv::fmt(e.train_accuracy) << ',' << csv::fmt(e.val_accuracy);
    out << '\n';
  }
}

FuelModel fuel_model_for(const ExperimentConfig& c) {
  const auto path = c.get_text("fuel_table");
  if (path.empty()) return default_fuel_model();
  require_file("fuel_table", path);
  return load_fuel_model(path);
}

void write_report(const MetricsReport& rep, const ExperimentConfig& c, Artifacts& a) {
  {
    auto out = open_out(a.path("report.json"));
    out << to_json(rep).dump(1) << '\n';
  }
  auto out = open_out(a.path("report.csv"));
  out << kReportCsvHeader << '\n';
  write_report_csv_row(rep, c.get_text("rv_type"), c.get_real("rv_penetration"), out);
}

void print_report(const MetricsReport& rep) {
  auto show = [](const char* name, const Stat& s) {
    std::cout << "  " << std::left << std::setw(22) << name << csv::fmt(s.mean, 6) << " +/- " << csv::fmt(s.std, 6)
              << '\n';
  };
  show("ttc_worst_rv [s]", rep.ttc_worst_rv);
  show("drac_worst_rv [m/s^2]", rep.drac_worst_rv);
  show("fuel_economy [mpg]", rep.fuel_economy);
  show("throughput [veh/h]", rep.throughput);
  if (rep.collisions > 0) std::cout << "  collisions: " << rep.collisions << " rollout(s)\n";
}

long rollouts_of(const ExperimentConfig& c) {
  const long n = c.get_int("rollouts");
  if (n < 1) throw ConfigError("rollouts must be >= 1");
  return n;
}

std::vector<std::uint64_t> seeds_of(const ExperimentConfig& c, long n) {
  std::vector<std::uint64_t> seeds;
  for (long k = 0; k < n; ++k) seeds.push_back(static_cast<std::uint64_t>(c.get_int("seed") + k));
  return seeds;
}

}  // namespace

std::string Artifacts::path(const std::string& name) {
  files.push_back(name);
  return (fs::path(out_dir) / name).string();
}

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c.load_file(o.config_path);
  if (o.use_env) c.load_env();
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(std::string(csv::trim(std::string_view(kv).substr(0, eq))), kv.substr(eq + 1));
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.rollouts) c.set("rollouts", std::to_string(*o.rollouts));
  if (o.out) c.set("out", *o.out);
  if (o.input) c.set("input", *o.input);
  return c;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_manifest(const std::string& command, const ExperimentConfig& c, const Artifacts& a,
                    const nlohmann::json& extra) {
  nlohmann::json m;
  m["command"] = command;
  m["seed"] = c.get_int("seed");
  m["config"] = c.to_json();
  auto& hashes = m["artifacts"] = nlohmann::json::object();
  for (const auto& f : a.files) hashes[f] = sha256_file((fs::path(a.out_dir) / f).string());
  for (const auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream out(fs::path(a.out_dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + a.out_dir);
  out << m.dump(1) << '\n';
}

void build_setup(const ExperimentConfig& c, SimulationSetup& s) {
  s.rollout = rollout_config(c);
  auto& ctx = s.context;
  ctx.controllers = controller_suite(c);
  ctx.durations = duration_model(c);
  ctx.perturbations = c.get_bool("perturbations");
  ctx.perturbation_safe_speed = c.get_bool("hv.safe_speed");
  ctx.label_rules = label_rules(c);

  const auto bc_path = c.get_text("bc_model");
  if (!bc_path.empty()) {
    require_file("bc_model", bc_path);
    s.bc_model = load_mlp(bc_path);
    ctx.bc_model = &s.bc_model;
  } else if (ctx.perturbations) {
    s.warnings.push_back("no bc_model configured; close-headway perturbations fall back to IDM");
  }

  const auto mode = c.get_text("label_mode");
  const auto clf_path = c.get_text("classifier");
  if (mode == "classifier") {
    if (clf_path.empty()) throw ConfigError("label_mode classifier needs a classifier file");
    require_file("classifier", clf_path);
    s.classifier = load_mlp(clf_path);
    ctx.classifier = &s.classifier;
    ctx.label_mode = LabelMode::Classifier;
  } else if (mode != "oracle") {
    throw ConfigError("label_mode must be oracle or classifier");
  }

  const int n_rv = rv_count(s.rollout.n_vehicles, s.rollout.rv_penetration);
  for (int i = 0; i < n_rv; ++i) s.rv_ids.push_back(i);

  if (s.rollout.rv_controller == ControllerKind::Policy) {
    const auto leader_path = c.get_text("rl.policy");
    if (leader_path.empty()) throw ConfigError("rv_type rl needs rl.policy");
    s.leader = load_policy("rl.policy", leader_path);
    const Mlp* clf = ctx.classifier;
    const auto platoon = platoon_assign(s.rollout.n_vehicles, s.rollout.rv_penetration);
    const auto follower_path = c.get_text("rl.follower_policy");
    if (!platoon.followers.empty() && !follower_path.empty()) {
      s.follower = load_policy("rl.follower_policy", follower_path);
      ctx.policy = platoon_policy_fn(s.leader, s.follower, platoon, clf, ctx.label_rules);
    } else {
      if (!platoon.followers.empty()) {
        s.warnings.push_back("no rl.follower_policy; every RV runs the leader policy");
      }
      ctx.policy = leader_policy_fn(s.leader, clf, ctx.label_rules);
    }
  }
}

std::vector<TrajectoryLog> classifier_corpus(const ExperimentConfig& c) {
  const long n = c.get_int("dataset.rollouts");
  if (n < 1) throw ConfigError("dataset.rollouts must be >= 1");
  const double lo = c.get_real("dataset.density_min");
  const double hi = c.get_real("dataset.density_max");
  if (!(lo > 0.0) || hi < lo) throw ConfigError("dataset density range is invalid");

  ExperimentConfig base = c;
  base.set("rv_type", "idm");
  base.set("rv_penetration", "0");
  SimulationSetup s;
  build_setup(base, s);
  s.context.label_mode = LabelMode::Oracle;

  std::vector<TrajectoryLog> logs(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    RolloutConfig r = s.rollout;
    r.density = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    r.seed = s.rollout.seed + static_cast<std::uint64_t>(k);
    logs[static_cast<std::size_t>(k)] = run_rollout(r, s.context);
  }
  return logs;
}

int cmd_simulate(const ExperimentConfig& c) {
  SimulationSetup s;
  build_setup(c, s);
  print_warnings(s.warnings);
  const long n = rollouts_of(c);
  const auto logs = run_rollouts(s.rollout, s.context, static_cast<int>(n));

  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  for (long k = 0; k < n; ++k) {
    const auto& log = logs[static_cast<std::size_t>(k)];
    {
      auto out = open_out(a.path(numbered("rollout", k, "csv")));
      write_log_csv(log, out);
    }
    auto out = open_out(a.path(numbered("schedule", k, "csv")));
    write_schedule_csv(log.events, out);
  }
  const auto rep = report(logs, s.rv_ids, fuel_model_for(c), metrics_options(c));
  write_report(rep, c, a);
  write_manifest("simulate", c, a, {{"rollout_seeds", seeds_of(c, n)}, {"ring_length_m", s.rollout.ring_length()}});

  std::cout << "simulate: " << n << " rollout(s), " << s.rollout.n_vehicles << " vehicles, "
            << s.rv_ids.size() << " RV(s) [" << c.get_text("rv_type") << "], ring "
            << csv::fmt(s.rollout.ring_length(), 6) << " m -> " << a.out_dir << '\n';
  print_report(rep);
  return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& c) {
  SimulationSetup s;
  std::vector<TrajectoryLog> logs;
  const auto input = c.get_text("input");
  if (!input.empty()) {
    s.rollout = rollout_config(c);
    for (int i = 0; i < rv_count(s.rollout.n_vehicles, s.rollout.rv_penetration); ++i) s.rv_ids.push_back(i);
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
      for (const auto& e : fs::directory_iterator(input)) {
        const auto name = e.path().filename().string();
        if (name.rfind("rollout_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
    } else {
      require_file("input", input);
      files.emplace_back(input);
    }
    if (files.empty()) throw ConfigError("no rollout_*.csv logs in " + input);
    for (const auto& f : files) {
      std::ifstream in(f);
      logs.push_back(read_log_csv(in, s.rollout.dt, s.rollout.ring_length(), s.rollout.vehicle_length));
    }
  } else {
    build_setup(c, s);
    print_warnings(s.warnings);
    logs = run_rollouts(s.rollout, s.context, static_cast<int>(rollouts_of(c)));
  }

  const auto opts = metrics_options(c);
  const auto rep = report(logs, s.rv_ids, fuel_model_for(c), opts);
  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  write_report(rep, c, a);
  {
    auto out = open_out(a.path("spread.csv"));
    out << "rollout,mean_spread,final_spread\n";
    for (std::size_t k = 0; k < logs.size(); ++k) {
      const auto series = velocity_spread_series(logs[k]);
      double mean = 0.0;
      for (double v : series) mean += v;
      mean /= series.empty() ? 1.0 : static_cast<double>(series.size());
      out << k << ',' << csv::fmt(mean) << ',' << csv::fmt(series.empty() ? 0.0 : series.back()) << '\n';
    }
  }
  write_manifest("evaluate", c, a, {{"rollouts", logs.size()}});
  std::cout << "evaluate: " << logs.size() << " rollout(s), window [" << opts.window.start << ", " << opts.window.end
            << ") -> " << a.out_dir << '\n';
  print_report(rep);
  return kExitOk;
}

int cmd_train_bc(const ExperimentConfig& c) {
  std::string source = c.get_text("input");
  if (source.empty()) source = c.get_text("bc.input");
  std::vector<BcRow> rows;
  if (source.empty()) {
    rows = synthetic_bc_rows(static_cast<std::size_t>(c.get_int("bc.synthetic_rows")),
                             static_cast<std::uint64_t>(c.get_int("seed")), controller_suite(c).idm);
  } else {
    require_file("input", source);
    std::ifstream in(source);
    std::string header;
    std::getline(in, header);
    in.seekg(0);
    if (csv::Header(header).find("vehicle_id")) {
      const auto loaded = load_trajectories(in);
      print_warnings(loaded.warnings);
      rows = extract_bc_dataset(car_following_filter(loaded.records, filter_params(c))).rows;
    } else {
      rows = read_bc_csv(in);
    }
  }
  if (rows.empty()) throw ConfigError("BC dataset is empty");

  std::vector<int> layers = {3};
  for (int h : c.get_ints("bc.hidden")) layers.push_back(h);
  layers.push_back(1);
  const auto result = train_bc(rows, bc_train_config(c), layers);

  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  save_mlp(result.model, a.path("bc_model.json"), {{"kind", "bc"}, {"rows", rows.size()}});
  {
    auto out = open_out(a.path("bc_curve.csv"));
    write_epoch_csv(result.history, false, out);
  }
  write_manifest("train-bc", c, a, {{"rows", rows.size()}, {"source", source.empty() ? "synthetic" : source}});
  std::cout << "train-bc: " << rows.size() << " rows, " << result.model.param_count() << " parameters, loss "
            << csv::fmt(result.history.front().train_loss, 6) << " -> "
            << csv::fmt(result.history.back().train_loss, 6) << '\n';
  return kExitOk;
}

int cmd_train_classifier(const ExperimentConfig& c) {
  ClassifierDataset data;
  const auto input = c.get_text("input");
  if (!input.empty()) {
    require_file("input", input);
    std::ifstream in(input);
    data = read_dataset_csv(in);
  } else {
    data = build_dataset(classifier_corpus(c), c.get_real("speed_limit"), dataset_options(c));
  }
  print_warnings(data.warnings);
  if (data.size() == 0) throw ConfigError("classifier dataset is empty");

  const auto result = train_classifier(data, classifier_train_config(c), classifier_options(c));
  const auto confusion = confusion_matrix(result.model, result.validation);

  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  if (input.empty()) {
    auto out = open_out(a.path("dataset.csv"));
    write_dataset_csv(data, out);
  }
  save_mlp(result.model, a.path("classifier.json"), {{"kind", "classifier"}, {"rows", data.size()}});
  {
    auto out = open_out(a.path("classifier_curve.csv"));
    write_epoch_csv(result.history, true, out);
  }
  {
    auto out = open_out(a.path("confusion.csv"));
    write_confusion_csv(confusion, out);
  }
  const auto& last = result.history.back();
  write_manifest("train-classifier", c, a, {{"rows", data.size()}, {"val_accuracy", last.val_accuracy}});

  std::cout << "train-classifier: " << data.size() << " rows";
  const auto counts = data.class_counts();
  for (auto l : kAllLabels) std::cout << ' ' << to_string(l) << '=' << counts[index_of(l)];
  std::cout << "\n  epochs " << result.history.size() << ", validation accuracy " << csv::fmt(last.val_accuracy, 4)
            << '\n';
  return kExitOk;
}

int cmd_train_rl(const ExperimentConfig& c) {
  RingEnvConfig e;
  e.rollout = rollout_config(c);
  SimulationSetup s;
  {
    ExperimentConfig base = c;
    base.set("rv_type", "idm");
    build_setup(base, s);
  }
  print_warnings(s.warnings);
  e.context = s.context;
  e.reward = parse_reward_kind(c.get_text("rl.reward"));
  e.episode_steps = c.get_int("rl.episode_steps");
  GaussianPolicy leader;
  if (e.reward == RewardKind::Follower) {
    const auto path = c.get_text("rl.policy");
    if (path.empty()) throw ConfigError("follower training needs a frozen leader in rl.policy");
    leader = load_policy("rl.policy", path);
    e.leader_policy = leader_policy_fn(leader, s.context.classifier, s.context.label_rules);
  }
  const RingEnv env(e);
  const auto cfg = ppo_config(c);

  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  std::cout << "train-rl: reward " << to_string(e.reward) << ", " << env.n_agents() << " agent(s), lr "
            << cfg.learning_rate << ", " << cfg.iterations << " iterations\n";
  const auto result = ppo_train(env, cfg, RingEnv::observation_scale(e.reward, e.rollout.speed_limit),
                                [](const PpoIterationStats& st) {
                                  std::cout << "  iter " << st.iteration << " reward " << csv::fmt(st.mean_reward, 6)
                                            << " kl " << csv::fmt(st.kl, 4) << '\n';
                                });
  write_policy(result.policy, a.path("policy.json"));
  save_mlp(result.value, a.path("value.json"), {{"kind", "value"}});
  {
    auto out = open_out(a.path("rl_curve.csv"));
    write_curve_csv(result.curve, out);
  }
  write_manifest("train-rl", c, a, {{"learning_rate", cfg.learning_rate}, {"reward", to_string(e.reward)}});
  return kExitOk;
}

int cmd_filter_data(const ExperimentConfig& c) {
  const auto input = c.get_text("input");
  if (input.empty()) throw ConfigError("filter-data needs --input");
  const auto loaded = load_trajectories(input, c.get_real("vehicle_length"));
  print_warnings(loaded.warnings);
  const auto params = filter_params(c);
  const auto segments = car_following_filter(loaded.records, params);
  const auto bc = extract_bc_dataset(segments);
  const auto stats = characterize_perturbations(segments, c.get_real("filter.maneuver_threshold"));
  if (segments.empty()) std::cerr << "warning: no car-following segments passed the filter\n";

  Artifacts a{c.get_text("out"), {}};
  fs::create_directories(a.out_dir);
  {
    auto out = open_out(a.path("segments.csv"));
    write_segments_csv(segments, out);
  }
  {
    auto out = open_out(a.path("bc_dataset.csv"));
    write_bc_csv(bc.rows, out);
  }
  {
    auto out = open_out(a.path("perturbation_stats.json"));
    out << to_json(stats).dump(1) << '\n';
  }
  write_manifest("filter-data", c, a, {{"input", input}, {"input_sha256", sha256_file(input)}});
  std::cout << "filter-data: " << loaded.records.size() << " records, " << segments.size() << " segments, "
            << bc.rows.size() << " samples, " << stats.maneuvers.size() << " maneuvers\n";
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Mixed-traffic ring-road simulator and training pipeline"};
  app.require_subcommand(1);
  Overrides o;
  long seed = 0, rollouts = 0;
  std::string out, input;

  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&);
  };
  const Entry entries[] = {
      {"simulate", "run ring rollouts and write logs, schedules and a metrics report", cmd_simulate},
      {"evaluate", "metrics report from fresh rollouts or from existing logs (--input)", cmd_evaluate},
      {"train-bc", "fit the behavioral-cloning driver model", cmd_train_bc},
      {"train-classifier", "build the labeled dataset and fit the congestion classifier", cmd_train_classifier},
      {"train-rl", "train an RV policy with PPO on the ring", cmd_train_rl},
      {"filter-data", "car-following filter over a trajectory CSV", cmd_filter_data},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config,-c", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--rollouts,-n", rollouts, "number of rollouts");
    sub->add_option("--out,-o", out, "output directory");
    sub->add_option("--input,-i", input, "input file or directory");
    sub->add_option("--set", o.sets, "override one config key (key=value); repeatable");
    subs.emplace_back(sub, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    for (const auto& [sub, entry] : subs) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) o.seed = seed;
      if (sub->count("--rollouts")) o.rollouts = rollouts;
      if (sub->count("--out")) o.out = out;
      if (sub->count("--input")) o.input = input;
      const auto config = resolve_config(o);
      return entry->fn(config);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace carl::app
