#include "carl/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace carl {

namespace {
constexpr std::uint64_t kHvStream = 0x4856;  // per-vehicle perturbation streams
}

RingSimulation::RingSimulation(const RolloutConfig& config, const RolloutContext& context)
    : config_(config), context_(context), world_(init_ring(config)) {
  context_.controllers.idm.validate();
  context_.controllers.fs.validate();
  context_.controllers.piws.validate();
  context_.durations.validate();
  n_rv_ = rv_count(config.n_vehicles, config.rv_penetration);
  const std::size_t n = world_.size();
  controllers_.reserve(n);
  for (const auto& v : world_.vehicles) controllers_.emplace_back(v.controller);
  commands_.assign(n, 0.0);
  schedules_.resize(n);
  next_event_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) hv_rngs_.emplace_back(derive_seed(config.seed, kHvStream + i));

  const long start = config.perturbation_start;
  const long end = std::min(config.perturbation_end, config.horizon_steps);
  if (context_.perturbations && end > start) {
    for (std::size_t i = static_cast<std::size_t>(n_rv_); i < n; ++i) {
      auto s = sample_schedule(hv_rngs_[i], static_cast<int>(i), start, end - start, config.dt, context_.durations);
      schedules_[i] = std::move(s.events);
      warnings_.insert(warnings_.end(), s.warnings.begin(), s.warnings.end());
    }
  }
  for (std::size_t i = 0; i < n; ++i) controllers_[i].observe(world_, i, context_.controllers);

  log_.ring_length = world_.ring_length;
  log_.dt = world_.dt;
  log_.n_vehicles = static_cast<int>(n);
  log_.vehicle_length = config.vehicle_length;
  if (context_.record_log) {
    log_.rows.reserve(n * static_cast<std::size_t>(config.horizon_steps));
  }
}

CongestionLabel RingSimulation::label_of(std::size_t index) const {
  const auto snap = sense(world_, index);
  if (context_.label_mode == LabelMode::Classifier && context_.classifier) return predict(*context_.classifier, snap);
  return label_snapshot(snap, world_.speed_limit, context_.label_rules);
}

double RingSimulation::perturbation_accel(std::size_t i) {
  auto& v = world_.vehicles[i];
  const long t = world_.step_count;
  if (v.active_perturbation && !v.active_perturbation->active_at(t)) v.active_perturbation.reset();
  auto& events = schedules_[i];
  auto& next = next_event_[i];
  if (!v.active_perturbation && next < events.size() && events[next].start_step == t) {
    const auto& lead = world_.vehicles[world_.leader_of(i)];
    const double gap = headway(world_, i);
    const double fallback = idm_accel(v.velocity, raw_gap(world_, i), lead.velocity, context_.controllers.idm);
    if (gap < kImitationHeadway && !context_.bc_model && !warned_no_bc_) {
      warnings_.push_back("no behavioral-cloning model; close-gap perturbations follow IDM");
      warned_no_bc_ = true;
    }
    fire_event(events[next], hv_rngs_[i], gap, context_.bc_model, v.velocity, lead.velocity, fallback,
               context_.durations, world_.dt);
    v.active_perturbation = events[next];
    log_.events.push_back(events[next]);
    ++next;
  }
  if (!v.active_perturbation) return std::nan("");
  const auto& e = *v.active_perturbation;
  if (e.source == PerturbationSource::Imitation && e.start_step != t) {
    const auto& lead = world_.vehicles[world_.leader_of(i)];
    const double gap = headway(world_, i);
    if (context_.bc_model) return bc_predict(*context_.bc_model, v.velocity, gap, lead.velocity);
    return idm_accel(v.velocity, raw_gap(world_, i), lead.velocity, context_.controllers.idm);
  }
  return e.intensity;
}

void RingSimulation::advance(std::span<const double> rv_actions) {
  if (done()) throw std::logic_error("rollout already reached its horizon");
  const std::size_t n = world_.size();
  const bool active = controlling();
  if (active && !rv_actions.empty() && rv_actions.size() != static_cast<std::size_t>(n_rv_)) {
    throw std::invalid_argument("expected one action per robot vehicle");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_rv = i < static_cast<std::size_t>(n_rv_);
    double a = 0.0;
    if (!active) {
      const auto& lead = world_.vehicles[world_.leader_of(i)];
      a = clamp_controller_output(
          idm_accel(world_.vehicles[i].velocity, raw_gap(world_, i), lead.velocity, context_.controllers.idm));
    } else if (is_rv && !rv_actions.empty()) {
      a = std::clamp(rv_actions[i], -kMaxAccel, kMaxAccel);
    } else if (controllers_[i].kind() == ControllerKind::Policy) {
      if (!context_.policy) throw std::invalid_argument("policy-bound vehicle without a policy");
      a = std::clamp(context_.policy(world_, i), -kMaxAccel, kMaxAccel);
    } else {
      a = controllers_[i].accel(world_, i, context_.controllers);
    }
    if (!is_rv) {
      const double p = perturbation_accel(i);
      if (!std::isnan(p)) {
        a = p;
        if (context_.perturbation_safe_speed) {
          const auto& lead = world_.vehicles[world_.leader_of(i)];
          a = std::min(a, safe_accel_cap(raw_gap(world_, i), world_.vehicles[i].velocity, lead.velocity, world_.dt));
        }
      }
    }
    commands_[i] = a;
  }
  const long t = world_.step_count;
  const std::size_t row0 = log_.rows.size();
  if (context_.record_log) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = world_.vehicles[i];
      LogRow row;
      row.step = t;
      row.id = v.id;
      row.position = v.position;
      row.velocity = v.velocity;
      row.headway = headway(world_, i);
      row.label = label_of(i);
      row.perturbed = v.active_perturbation.has_value() && v.active_perturbation->active_at(t);
      log_.rows.push_back(row);
    }
  }
  step(world_, commands_);
  for (std::size_t i = 0; i < n; ++i) {
    controllers_[i].observe(world_, i, context_.controllers);
    if (context_.record_log) log_.rows[row0 + i].acceleration = world_.vehicles[i].acceleration;
  }
  if (context_.record_log) ++log_.steps;
}

void RingSimulation::run() {
  while (!done()) advance();
}

TrajectoryLog RingSimulation::take_log() {
  log_.collision = world_.collision;
  return std::move(log_);
}

TrajectoryLog run_rollout(const RolloutConfig& config, const RolloutContext& context) {
  RingSimulation sim(config, context);
  sim.run();
  return sim.take_log();
}

std::vector<TrajectoryLog> run_rollouts(const RolloutConfig& config, const RolloutContext& context, int n) {
  std::vector<TrajectoryLog> logs(static_cast<std::size_t>(std::max(n, 0)));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    RolloutConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(k);
    logs[static_cast<std::size_t>(k)] = run_rollout(c, context);
  }
  return logs;
}

std::vector<TrajectoryLog> run_rollouts_serial(const RolloutConfig& config, const RolloutContext& context, int n) {
  std::vector<TrajectoryLog> logs;
  for (int k = 0; k < n; ++k) {
    RolloutConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(k);
    logs.push_back(run_rollout(c, context));
  }
  return logs;
}

std::vector<double> velocity_spread_series(const TrajectoryLog& log) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(log.steps));
  for (long t = 0; t < log.steps; ++t) {
    double mean = 0.0;
    for (int i = 0; i < log.n_vehicles; ++i) mean += log.at(t, i).velocity;
    mean /= log.n_vehicles;
    double acc = 0.0;
    for (int i = 0; i < log.n_vehicles; ++i) {
      const double d = log.at(t, i).velocity - mean;
      acc += d * d;
    }
    out.push_back(std::sqrt(acc / log.n_vehicles));
  }
  return out;
}

}  // namespace carl
