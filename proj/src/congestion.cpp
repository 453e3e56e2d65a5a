#include "carl/congestion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "carl/csv.hpp"
#include "carl/rng.hpp"

namespace carl {

SensingSnapshot sense(const World& world, std::size_t index, double range) {
  SensingSnapshot s;
  const auto& ego = world.vehicles[index];
  s.vehicle_length = ego.length;
  for (std::size_t j = world.leader_of(index); j != index && s.entries.size() < kSnapshotSlots;
       j = world.leader_of(j)) {
    const double d = forward_distance(world, ego.position, world.vehicles[j].position);
    if (d > range) break;
    if (d <= 0.0) continue;
    s.entries.push_back({d, world.vehicles[j].velocity});
  }
  return s;
}

std::vector<double> snapshot_headways(const SensingSnapshot& s) {
  std::vector<double> h;
  double prev = 0.0;
  for (const auto& e : s.entries) {
    h.push_back(e.rel_position - prev - s.vehicle_length);
    prev = e.rel_position;
  }
  return h;
}

CongestionLabel label_snapshot(const SensingSnapshot& s, double speed_limit, const LabelRules& rules) {
  if (s.entries.empty()) return CongestionLabel::NoVehicle;
  for (std::size_t k = 1; k < s.entries.size(); ++k) {
    if (!(s.entries[k].rel_position > s.entries[k - 1].rel_position)) {
      throw std::invalid_argument("snapshot entries must be strictly increasing in position");
    }
  }
  const auto h = snapshot_headways(s);
  if (h.size() >= 2) {
    bool forming = true;
    bool leaving = true;
    for (std::size_t k = 1; k < h.size(); ++k) {
      forming = forming && h[k] < h[k - 1] - rules.monotone_tolerance;
      leaving = leaving && h[k] > h[k - 1] + rules.monotone_tolerance;
    }
    if (forming) return CongestionLabel::Forming;
    if (leaving) return CongestionLabel::Leaving;
  }
  double mean_speed = 0.0;
  for (const auto& e : s.entries) mean_speed += e.velocity;
  mean_speed /= static_cast<double>(s.entries.size());
  const bool all_tight = std::all_of(h.begin(), h.end(), [&](double g) { return g < rules.congested_gap; });
  const bool all_open = std::all_of(h.begin(), h.end(), [&](double g) { return g > rules.free_gap; });
  if (all_tight && mean_speed < rules.congested_speed_fraction * speed_limit) return CongestionLabel::Congested;
  if (all_open && mean_speed > rules.free_speed_fraction * speed_limit) return CongestionLabel::FreeFlow;
  return CongestionLabel::Undefined;
}

std::vector<double> encode_features(const SensingSnapshot& s) {
  std::vector<double> f(kFeatureDim, kEmptySlot);
  for (std::size_t k = 0; k < kSnapshotSlots; ++k) {
    const bool present = k < s.entries.size();
    if (present) {
      f[2 * k] = s.entries[k].rel_position;
      f[2 * k + 1] = s.entries[k].velocity;
    }
    f[2 * kSnapshotSlots + k] = present ? 1.0 : 0.0;
  }
  return f;
}

SensingSnapshot decode_features(std::span<const double> features, double vehicle_length) {
  if (features.size() != kFeatureDim) throw std::invalid_argument("feature vector must have 24 values");
  SensingSnapshot s;
  s.vehicle_length = vehicle_length;
  for (std::size_t k = 0; k < kSnapshotSlots; ++k) {
    if (features[2 * kSnapshotSlots + k] > 0.5) s.entries.push_back({features[2 * k], features[2 * k + 1]});
  }
  return s;
}

std::array<std::size_t, kNumLabels> ClassifierDataset::class_counts() const {
  std::array<std::size_t, kNumLabels> c{};
  for (auto l : labels) ++c[index_of(l)];
  return c;
}

World world_from_log(const TrajectoryLog& log, long step, double speed_limit) {
  if (step < 0 || step >= log.steps) throw std::out_of_range("log step out of range");
  World w;
  w.ring_length = log.ring_length;
  w.dt = log.dt;
  w.speed_limit = speed_limit;
  w.step_count = step;
  w.vehicles.resize(static_cast<std::size_t>(log.n_vehicles));
  for (int i = 0; i < log.n_vehicles; ++i) {
    const auto& row = log.at(step, i);
    auto& v = w.vehicles[static_cast<std::size_t>(i)];
    v.id = i;
    v.position = row.position;
    v.velocity = row.velocity;
    v.acceleration = row.acceleration;
    v.length = log.vehicle_length;
  }
  return w;
}

ClassifierDataset window_log(const TrajectoryLog& log, double speed_limit, const DatasetOptions& opt) {
  if (opt.offset < 0) throw std::invalid_argument("offset must be >= 0");
  if (log.steps <= opt.offset) throw std::invalid_argument("log is not longer than the label offset");
  std::vector<int> observers = opt.observers;
  if (observers.empty()) {
    observers.resize(static_cast<std::size_t>(log.n_vehicles));
    std::iota(observers.begin(), observers.end(), 0);
  }
  const auto n_obs = observers.size();
  std::vector<SensingSnapshot> snaps(static_cast<std::size_t>(log.steps) * n_obs);
  std::vector<CongestionLabel> labels(snaps.size());
  for (long t = 0; t < log.steps; ++t) {
    const World w = world_from_log(log, t, speed_limit);
    for (std::size_t k = 0; k < n_obs; ++k) {
      const auto idx = static_cast<std::size_t>(t) * n_obs + k;
      snaps[idx] = sense(w, static_cast<std::size_t>(observers[k]));
      labels[idx] = label_snapshot(snaps[idx], speed_limit, opt.rules);
    }
  }
  ClassifierDataset d;
  for (long t = 0; t + opt.offset < log.steps; ++t) {
    for (std::size_t k = 0; k < n_obs; ++k) {
      const auto now = static_cast<std::size_t>(t) * n_obs + k;
      const auto later = static_cast<std::size_t>(t + opt.offset) * n_obs + k;
      if (labels[now] == CongestionLabel::NoVehicle && labels[later] != CongestionLabel::NoVehicle) continue;
      d.features.push_back(encode_features(snaps[now]));
      d.labels.push_back(labels[later]);
      d.transition.push_back(labels[now] != labels[later]);
    }
  }
  d.candidates = d.size();
  return d;
}

ClassifierDataset balance_dataset(const ClassifierDataset& raw, const DatasetOptions& opt) {
  Rng rng(derive_seed(opt.seed, 0xba1a));
  std::array<std::vector<std::size_t>, kNumLabels> trans, steady;
  for (std::size_t r = 0; r < raw.size(); ++r) {
    (raw.transition[r] ? trans : steady)[index_of(raw.labels[r])].push_back(r);
  }
  ClassifierDataset out;
  out.warnings = raw.warnings;
  out.candidates = raw.candidates;
  std::size_t target = 0;
  for (auto label : kAllLabels) {
    if (label == CongestionLabel::NoVehicle) continue;
    const auto c = index_of(label);
    const std::size_t n = trans[c].size() + steady[c].size();
    if (n == 0) {
      out.warnings.push_back("class " + std::string(to_string(label)) + " absent from the logs");
    } else if (n < opt.min_class_rows) {
      out.warnings.push_back("class " + std::string(to_string(label)) + " has only " + std::to_string(n) +
                             " rows; kept without setting the balance target");
    } else if (target == 0 || n < target) {
      target = n;
    }
  }
  if (target == 0) {
    for (std::size_t c = 0; c < kNumLabels; ++c) target = std::max(target, trans[c].size() + steady[c].size());
  }
  std::vector<std::size_t> keep;
  for (auto label : kAllLabels) {
    const auto c = index_of(label);
    rng.shuffle(std::span<std::size_t>(trans[c]));
    rng.shuffle(std::span<std::size_t>(steady[c]));
    auto n_trans = std::min(trans[c].size(),
                            static_cast<std::size_t>(std::floor(opt.max_transition_share * static_cast<double>(target))));
    const auto n_steady = std::min(steady[c].size(), target - n_trans);
    if (n_trans + n_steady < target) n_trans = std::min(trans[c].size(), target - n_steady);
    keep.insert(keep.end(), trans[c].begin(), trans[c].begin() + static_cast<long>(n_trans));
    keep.insert(keep.end(), steady[c].begin(), steady[c].begin() + static_cast<long>(n_steady));
  }
  for (auto r : keep) {
    out.features.push_back(raw.features[r]);
    out.labels.push_back(raw.labels[r]);
    out.transition.push_back(raw.transition[r]);
  }
  const std::size_t have_empty = out.class_counts()[index_of(CongestionLabel::NoVehicle)];
  for (std::size_t k = have_empty; k < target; ++k) {
    out.features.push_back(encode_features(SensingSnapshot{}));
    out.labels.push_back(CongestionLabel::NoVehicle);
    out.transition.push_back(false);
  }
  // Final row order is shuffled so that later train/validation splits see every class.
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  ClassifierDataset shuffled;
  shuffled.warnings = std::move(out.warnings);
  shuffled.candidates = out.candidates;
  for (auto r : order) {
    shuffled.features.push_back(std::move(out.features[r]));
    shuffled.labels.push_back(out.labels[r]);
    shuffled.transition.push_back(out.transition[r]);
  }
  const auto counts = shuffled.class_counts();
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto n) { return n > 0; }));
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    shuffled.class_weights[c] =
        counts[c] ? static_cast<double>(shuffled.size()) / (present * static_cast<double>(counts[c])) : 0.0;
  }
  return shuffled;
}

ClassifierDataset build_dataset(const std::vector<TrajectoryLog>& logs, double speed_limit,
                                const DatasetOptions& opt) {
  ClassifierDataset merged;
  for (const auto& log : logs) {
    auto part = window_log(log, speed_limit, opt);
    merged.features.insert(merged.features.end(), std::make_move_iterator(part.features.begin()),
                           std::make_move_iterator(part.features.end()));
    merged.labels.insert(merged.labels.end(), part.labels.begin(), part.labels.end());
    merged.transition.insert(merged.transition.end(), part.transition.begin(), part.transition.end());
  }
  merged.candidates = merged.size();
  if (!opt.balance) {
    merged.class_weights.fill(1.0);
    return merged;
  }
  return balance_dataset(merged, opt);
}

ClassifierDataset build_dataset(const TrajectoryLog& log, double speed_limit, const DatasetOptions& opt) {
  return build_dataset(std::vector<TrajectoryLog>{log}, speed_limit, opt);
}

void write_dataset_csv(const ClassifierDataset& d, std::ostream& out) {
  for (std::size_t k = 0; k < 2 * kSnapshotSlots; ++k) out << 'f' << k << ',';
  for (std::size_t k = 0; k < kSnapshotSlots; ++k) out << "mask" << k << ',';
  out << "label\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.features[r]) out << csv::fmt(v) << ',';
    out << to_string(d.labels[r]) << '\n';
  }
}

ClassifierDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset: missing header");
  const csv::Header header(line);
  if (header.size() != kFeatureDim + 1) throw std::invalid_argument("dataset: expected 25 columns");
  const auto label_col = header.require("label");
  ClassifierDataset d;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != kFeatureDim + 1) {
      throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": wrong field count");
    }
    std::vector<double> row;
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (k != label_col) row.push_back(csv::to_double(f[k]));
    }
    d.features.push_back(std::move(row));
    d.labels.push_back(parse_label(f[label_col]));
    d.transition.push_back(false);
  }
  d.candidates = d.size();
  d.class_weights.fill(1.0);
  return d;
}

ClassifierResult train_classifier(const ClassifierDataset& d, const TrainConfig& cfg, const ClassifierOptions& opt) {
  if (d.size() == 0) throw std::invalid_argument("empty classifier dataset");
  const auto counts = d.class_counts();
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto n) { return n > 0; });
  if (present < 2 && !opt.allow_degenerate) throw std::invalid_argument("classifier dataset has a single class");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0xc1a5));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(std::floor(opt.validation_fraction * static_cast<double>(d.size())));
  Batch train_set;
  ClassifierResult result;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto r = order[k];
    std::vector<double> y(kNumLabels, 0.0);
    y[index_of(d.labels[r])] = 1.0;
    auto& dst = k < n_val ? result.validation : train_set;
    dst.x.push_back(d.features[r]);
    dst.y.push_back(std::move(y));
    if (k >= n_val && opt.use_class_weights) train_set.weight.push_back(d.class_weights[index_of(d.labels[r])]);
  }
  if (train_set.size() == 0) throw std::invalid_argument("no training rows after the validation split");
  std::vector<int> layers{static_cast<int>(kFeatureDim)};
  layers.insert(layers.end(), opt.hidden.begin(), opt.hidden.end());
  layers.push_back(static_cast<int>(kNumLabels));
  result.model = Mlp(layers, OutputActivation::Softmax, derive_seed(cfg.seed, 2));
  result.model.normalizer = Normalizer::fit(train_set.x);
  result.history = train(result.model, train_set, result.validation, LossKind::CrossEntropy, cfg);
  return result;
}

std::vector<double> predict_proba(const Mlp& classifier, const SensingSnapshot& s) {
  return forward(classifier, encode_features(s));
}

CongestionLabel predict(const Mlp& classifier, const SensingSnapshot& s) {
  const auto p = predict_proba(classifier, s);
  if (p.size() != kNumLabels) throw std::invalid_argument("classifier must have 6 outputs");
  return kAllLabels[argmax(p)];
}

Confusion confusion_matrix(const Mlp& classifier, const Batch& data) {
  Confusion c{};
  const auto out = forward_batch(classifier, data.x);
  for (std::size_t r = 0; r < data.size(); ++r) ++c[argmax(data.y[r])][argmax(out[r])];
  return c;
}

void write_confusion_csv(const Confusion& c, std::ostream& out) {
  out << "true\\pred";
  for (auto l : kAllLabels) out << ',' << to_string(l);
  out << '\n';
  for (auto t : kAllLabels) {
    out << to_string(t);
    for (auto p : kAllLabels) out << ',' << c[index_of(t)][index_of(p)];
    out << '\n';
  }
}

}  // namespace carl
