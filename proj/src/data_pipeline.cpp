#include "carl/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "carl/csv.hpp"

namespace carl {

namespace {

constexpr double kTimeTolerance = 1e-9;

using RecordKey = std::pair<long, long long>;

long long time_key(double t) { return std::llround(t * 1e6); }

std::map<RecordKey, std::size_t> index_records(const std::vector<TrajectoryRecord>& records) {
  std::map<RecordKey, std::size_t> idx;
  for (std::size_t k = 0; k < records.size(); ++k) idx[{records[k].vehicle_id, time_key(records[k].time)}] = k;
  return idx;
}

const TrajectoryRecord* find_leader(const std::vector<TrajectoryRecord>& records,
                                    const std::map<RecordKey, std::size_t>& idx, const TrajectoryRecord& r) {
  if (!r.leader_id) return nullptr;
  const auto it = idx.find({*r.leader_id, time_key(r.time)});
  return it == idx.end() ? nullptr : &records[it->second];
}

std::optional<long> parse_leader(std::string_view text) {
  text = csv::trim(text);
  if (text.empty() || text == "-1" || text == "NA" || text == "nan" || text == "None") return std::nullopt;
  return csv::to_long(text);
}

// Visits maximal qualifying runs of each vehicle; `emit` receives the record indices of a run.
template <typename Emit>
void for_each_run(const std::vector<TrajectoryRecord>& records, const FilterParams& p, Emit emit) {
  const auto idx = index_records(records);
  std::vector<std::size_t> run;
  const TrajectoryRecord* run_leader = nullptr;
  auto flush = [&]() {
    if (!run.empty()) {
      const double span = records[run.back()].time - records[run.front()].time;
      if (span >= p.min_duration - kTimeTolerance) emit(run);
    }
    run.clear();
    run_leader = nullptr;
  };
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    const auto* leader = find_leader(records, idx, r);
    const bool ok = sample_qualifies(r, leader, p);
    if (!run.empty()) {
      const auto& prev = records[run.back()];
      const bool continues = ok && prev.vehicle_id == r.vehicle_id && prev.lane_id == r.lane_id &&
                             run_leader && *prev.leader_id == *r.leader_id &&
                             r.time - prev.time <= p.max_time_gap + kTimeTolerance;
      if (!continues) flush();
    }
    if (ok) {
      run.push_back(k);
      run_leader = leader;
    }
  }
  flush();
}

}  // namespace

LoadResult load_trajectories(std::istream& in, double vehicle_length) {
  LoadResult out;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trajectory file is empty (no header)");
  const csv::Header header(line);
  const auto c_time = header.require("time");
  const auto c_id = header.require("vehicle_id");
  const auto c_lane = header.require("lane_id");
  const auto c_pos = header.require("position");
  const auto c_vel = header.require("velocity");
  const auto c_leader = header.find("leader_id");
  const auto c_gap = header.find("space_headway");
  const auto c_acc = header.find("acceleration");
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(f.size()));
      continue;
    }
    TrajectoryRecord r;
    try {
      r.time = csv::to_double(f[c_time]);
      r.vehicle_id = csv::to_long(f[c_id]);
      r.lane_id = csv::to_long(f[c_lane]);
      r.position = csv::to_double(f[c_pos]);
      r.velocity = csv::to_double(f[c_vel]);
      if (c_leader) r.leader_id = parse_leader(f[*c_leader]);
      if (c_gap && !csv::trim(f[*c_gap]).empty()) r.space_headway = csv::to_double(f[*c_gap]);
      if (c_acc) r.acceleration = csv::to_double(f[*c_acc]);
    } catch (const std::invalid_argument& e) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    if (!std::isfinite(r.time) || !std::isfinite(r.position) || !std::isfinite(r.velocity) || r.velocity < 0.0) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": non-finite value or negative velocity");
      continue;
    }
    out.records.push_back(r);
  }
  auto& recs = out.records;
  std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
    return a.vehicle_id != b.vehicle_id ? a.vehicle_id < b.vehicle_id : a.time < b.time;
  });
  std::vector<TrajectoryRecord> unique;
  for (const auto& r : recs) {
    if (!unique.empty() && unique.back().vehicle_id == r.vehicle_id && time_key(unique.back().time) == time_key(r.time)) {
      out.warnings.push_back("vehicle " + std::to_string(r.vehicle_id) + ": duplicate time " + csv::fmt(r.time) +
                             " dropped");
      continue;
    }
    unique.push_back(r);
  }
  recs = std::move(unique);
  if (!c_acc) {
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const bool has_prev = k > 0 && recs[k - 1].vehicle_id == recs[k].vehicle_id;
      const bool has_next = k + 1 < recs.size() && recs[k + 1].vehicle_id == recs[k].vehicle_id;
      const auto& a = has_prev ? recs[k - 1] : recs[k];
      const auto& b = has_next ? recs[k + 1] : recs[k];
      recs[k].acceleration = b.time > a.time ? (b.velocity - a.velocity) / (b.time - a.time) : 0.0;
      recs[k].acceleration_derived = true;
    }
  }
  const auto idx = index_records(recs);
  for (auto& r : recs) {
    if (r.space_headway) continue;
    if (const auto* leader = find_leader(recs, idx, r)) r.space_headway = leader->position - r.position - vehicle_length;
  }
  return out;
}

LoadResult load_trajectories(const std::string& path, double vehicle_length) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open trajectory file " + path);
  return load_trajectories(in, vehicle_length);
}

void write_trajectories_csv(const std::vector<TrajectoryRecord>& records, std::ostream& out) {
  out << "time,vehicle_id,lane_id,position,velocity,leader_id,space_headway,acceleration\n";
  for (const auto& r : records) {
    out << csv::fmt(r.time) << ',' << r.vehicle_id << ',' << r.lane_id << ',' << csv::fmt(r.position) << ','
        << csv::fmt(r.velocity) << ',' << (r.leader_id ? std::to_string(*r.leader_id) : "") << ','
        << (r.space_headway ? csv::fmt(*r.space_headway) : "") << ',' << csv::fmt(r.acceleration) << '\n';
  }
}

bool sample_qualifies(const TrajectoryRecord& r, const TrajectoryRecord* leader, const FilterParams& p) {
  if (!r.leader_id || !leader) return false;
  if (leader->lane_id != r.lane_id) return false;
  if (!(r.velocity > p.min_speed_fraction * p.speed_limit)) return false;
  if (!r.space_headway || !(*r.space_headway < p.max_headway)) return false;
  return true;
}

std::vector<CarFollowingSegment> car_following_filter(const std::vector<TrajectoryRecord>& records,
                                                      const FilterParams& p) {
  if (!(p.speed_limit > 0)) throw std::invalid_argument("speed_limit must be > 0");
  const auto idx = index_records(records);
  std::vector<CarFollowingSegment> segments;
  for_each_run(records, p, [&](const std::vector<std::size_t>& run) {
    CarFollowingSegment s;
    const auto& first = records[run.front()];
    s.ego_id = first.vehicle_id;
    s.leader_id = *first.leader_id;
    s.lane_id = first.lane_id;
    for (auto k : run) {
      const auto& r = records[k];
      const auto* leader = find_leader(records, idx, r);
      s.samples.push_back({r.time, r.velocity, *r.space_headway, leader->velocity, r.acceleration});
    }
    segments.push_back(std::move(s));
  });
  return segments;
}

std::vector<TrajectoryRecord> filtered_records(const std::vector<TrajectoryRecord>& records, const FilterParams& p) {
  const auto idx = index_records(records);
  std::set<std::size_t> keep;
  for_each_run(records, p, [&](const std::vector<std::size_t>& run) {
    for (auto k : run) {
      keep.insert(k);
      keep.insert(idx.at({*records[k].leader_id, time_key(records[k].time)}));
    }
    // The rows that ended the run stay too, so neighbouring runs cannot merge on a second pass.
    const auto first = run.front(), last = run.back();
    if (first > 0 && records[first - 1].vehicle_id == records[first].vehicle_id) keep.insert(first - 1);
    if (last + 1 < records.size() && records[last + 1].vehicle_id == records[last].vehicle_id) keep.insert(last + 1);
  });
  std::vector<TrajectoryRecord> out;
  for (auto k : keep) out.push_back(records[k]);
  return out;
}

BcDataset extract_bc_dataset(const std::vector<CarFollowingSegment>& segments) {
  BcDataset d;
  Matrix x;
  for (const auto& s : segments) {
    for (const auto& f : s.samples) {
      d.rows.push_back({f.ego_v, f.headway, f.leader_v, f.ego_accel});
      x.push_back({f.ego_v, f.headway, f.leader_v});
    }
  }
  d.stats = Normalizer::fit(x);
  return d;
}

PerturbationStats characterize_perturbations(const std::vector<CarFollowingSegment>& segments, double threshold) {
  PerturbationStats st;
  for (const auto& s : segments) {
    const auto n = s.samples.size();
    const double interval = n > 1 ? s.duration() / static_cast<double>(n - 1) : 0.0;
    st.observed_seconds += s.duration() + interval;
    std::size_t k = 0;
    while (k < n) {
      if (std::abs(s.samples[k].ego_accel) <= threshold) {
        ++k;
        continue;
      }
      const std::size_t begin = k;
      double peak = s.samples[k].ego_accel;
      while (k < n && std::abs(s.samples[k].ego_accel) > threshold) {
        if (std::abs(s.samples[k].ego_accel) > std::abs(peak)) peak = s.samples[k].ego_accel;
        ++k;
      }
      const double duration = s.samples[k - 1].time - s.samples[begin].time + interval;
      st.maneuvers.push_back({s.ego_id, s.samples[begin].time, duration, peak});
    }
  }
  const auto m = static_cast<double>(st.maneuvers.size());
  if (st.observed_seconds > 0) st.per_six_minutes = m / (st.observed_seconds / 360.0);
  st.intensity_duration_correlation = std::numeric_limits<double>::quiet_NaN();
  if (st.maneuvers.empty()) return st;
  double mi = 0.0, md = 0.0;
  for (const auto& x : st.maneuvers) {
    mi += std::abs(x.intensity);
    md += x.duration;
  }
  st.mean_abs_intensity = mi / m;
  st.mean_duration = md / m;
  if (st.maneuvers.size() >= 2) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& x : st.maneuvers) {
      const double a = std::abs(x.intensity) - st.mean_abs_intensity;
      const double b = x.duration - st.mean_duration;
      sxy += a * b;
      sxx += a * a;
      syy += b * b;
    }
    if (sxx > 0 && syy > 0) st.intensity_duration_correlation = sxy / std::sqrt(sxx * syy);
  }
  return st;
}

void write_segments_csv(const std::vector<CarFollowingSegment>& segments, std::ostream& out) {
  out << "segment_id,ego_id,leader_id,lane_id,time,ego_v,headway,leader_v,ego_accel\n";
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    for (const auto& f : s.samples) {
      out << k << ',' << s.ego_id << ',' << s.leader_id << ',' << s.lane_id << ',' << csv::fmt(f.time) << ','
          << csv::fmt(f.ego_v) << ',' << csv::fmt(f.headway) << ',' << csv::fmt(f.leader_v) << ','
          << csv::fmt(f.ego_accel) << '\n';
    }
  }
}

void write_bc_csv(const std::vector<BcRow>& rows, std::ostream& out) {
  out << "ego_v,headway,leader_v,accel\n";
  for (const auto& r : rows) {
    out << csv::fmt(r.ego_v) << ',' << csv::fmt(r.headway) << ',' << csv::fmt(r.leader_v) << ',' << csv::fmt(r.accel)
        << '\n';
  }
}

std::vector<BcRow> read_bc_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("BC dataset: missing header");
  const csv::Header h(line);
  const auto cv = h.require("ego_v"), cg = h.require("headway"), cl = h.require("leader_v"), ca = h.require("accel");
  std::vector<BcRow> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != h.size()) throw std::invalid_argument("BC dataset line " + std::to_string(line_no) + ": wrong field count");
    rows.push_back({csv::to_double(f[cv]), csv::to_double(f[cg]), csv::to_double(f[cl]), csv::to_double(f[ca])});
  }
  return rows;
}

nlohmann::json to_json(const PerturbationStats& s) {
  nlohmann::json j;
  j["maneuvers"] = s.maneuvers.size();
  j["observed_seconds"] = s.observed_seconds;
  j["per_six_minutes"] = s.per_six_minutes;
  j["mean_abs_intensity"] = s.mean_abs_intensity;
  j["mean_duration_s"] = s.mean_duration;
  if (std::isnan(s.intensity_duration_correlation)) {
    j["intensity_duration_correlation"] = nullptr;
  } else {
    j["intensity_duration_correlation"] = s.intensity_duration_correlation;
  }
  return j;
}

std::vector<TrajectoryRecord> records_from_log(const TrajectoryLog& log, long lane_id) {
  World ring;
  ring.ring_length = log.ring_length;
  std::vector<TrajectoryRecord> out;
  out.reserve(log.rows.size());
  for (int i = 0; i < log.n_vehicles; ++i) {
    double unwrapped = log.at(0, i).position;
    for (long t = 0; t < log.steps; ++t) {
      const auto& row = log.at(t, i);
      if (t > 0) unwrapped += forward_distance(ring, log.at(t - 1, i).position, row.position);
      TrajectoryRecord r;
      r.time = static_cast<double>(t) * log.dt;
      r.vehicle_id = i;
      r.lane_id = lane_id;
      r.position = unwrapped;
      r.velocity = row.velocity;
      r.leader_id = (i + 1) % log.n_vehicles;
      r.space_headway = row.headway;
      r.acceleration = row.acceleration;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace carl
