#include "carl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace carl {

std::vector<double> Observation::to_vector() const {
  std::vector<double> x(kDim, 0.0);
  x[0] = v;
  x[1] = dp;
  x[2] = dv;
  x[3 + index_of(label)] = 1.0;
  return x;
}

Observation observe(const World& world, std::size_t index, CongestionLabel label) {
  const auto& ego = world.vehicles[index];
  const auto& lead = world.vehicles[world.leader_of(index)];
  return {ego.velocity, headway(world, index), lead.velocity - ego.velocity, label};
}

Observation observe(const World& world, std::size_t index, const Mlp* classifier, const LabelRules& rules) {
  const auto snap = sense(world, index);
  const auto label = classifier ? predict(*classifier, snap) : label_snapshot(snap, world.speed_limit, rules);
  return observe(world, index, label);
}

double reward_efficiency(double v, double a, CongestionLabel c, const RewardParams& p) {
  double r = p.eff_velocity * v + p.eff_accel * std::abs(a);
  if (c == CongestionLabel::Congested && a > 0) r += std::min(-1.0, p.lambda1 * std::abs(a));
  if (c == CongestionLabel::Leaving && a < 0) r += p.lambda2 * std::abs(a);
  return r;
}

double reward_safety(double mean_v, double a, CongestionLabel c, const RewardParams& p) {
  double r = p.safe_velocity * mean_v + p.safe_accel * std::abs(a);
  if (c == CongestionLabel::Forming) r += std::min(-1.0, p.lambda3 * std::abs(a));
  return r;
}

double reward_follower(double dp, double dv, double a, const RewardParams& p) {
  return p.lambda4 * dp + p.lambda5 * dv + p.lambda6 * std::abs(a) + p.lambda7;
}

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::Efficiency: return "efficiency";
    case RewardKind::Safety: return "safety";
    case RewardKind::Follower: return "follower";
  }
  return "?";
}

RewardKind parse_reward_kind(std::string_view text) {
  if (text == "efficiency") return RewardKind::Efficiency;
  if (text == "safety") return RewardKind::Safety;
  if (text == "follower") return RewardKind::Follower;
  throw std::invalid_argument("unknown reward kind '" + std::string(text) + "'");
}

Platoon platoon_assign(int n_vehicles, double penetration) {
  if (penetration < 0.0 || penetration > 1.0) throw std::invalid_argument("penetration must lie in [0, 1]");
  Platoon p;
  p.n_rv = rv_count(n_vehicles, penetration);
  if (p.n_rv == 0) throw std::invalid_argument("penetration yields zero robot vehicles");
  if (p.n_rv > kPlatoonMax) throw std::invalid_argument("platoon larger than " + std::to_string(kPlatoonMax));
  p.leader = p.n_rv - 1;
  for (int i = 0; i < p.leader; ++i) p.followers.push_back(i);
  return p;
}

std::vector<double> follower_observation(const World& world, const Platoon& platoon, std::size_t index) {
  std::vector<double> x(kFollowerObsDim, 0.0);
  const auto& ego = world.vehicles[index];
  for (int k = 0; k < platoon.n_rv; ++k) {
    const auto& m = world.vehicles[static_cast<std::size_t>(k)];
    double rel = 0.0;
    if (static_cast<std::size_t>(k) > index) {
      rel = forward_distance(world, ego.position, m.position);
    } else if (static_cast<std::size_t>(k) < index) {
      rel = -forward_distance(world, m.position, ego.position);
    }
    x[2 * static_cast<std::size_t>(k)] = rel;
    x[2 * static_cast<std::size_t>(k) + 1] = m.velocity - ego.velocity;
  }
  return x;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                      bool terminal, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("rewards/values length mismatch");
  const std::size_t n = rewards.size();
  GaeResult g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double next_value = terminal ? 0.0 : bootstrap;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double delta = rewards[k] + gamma * next_value - values[k];
    running = delta + gamma * lambda * running;
    g.advantages[k] = running;
    g.returns[k] = running + values[k];
    next_value = values[k];
  }
  return g;
}

std::vector<double> GaussianPolicy::prepare(std::span<const double> obs) const {
  std::vector<double> x(obs.begin(), obs.end());
  if (!obs_scale.empty()) {
    if (obs_scale.size() != x.size()) throw std::invalid_argument("observation scale dimension mismatch");
    for (std::size_t j = 0; j < x.size(); ++j) x[j] *= obs_scale[j];
  }
  return x;
}

std::vector<double> GaussianPolicy::mean_action(std::span<const double> obs) const {
  return forward(mean, prepare(obs));
}

double GaussianPolicy::log_prob(std::span<const double> mu, std::span<const double> action) const {
  double lp = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double z = (action[j] - mu[j]) / std::exp(log_std[j]);
    lp += -0.5 * z * z - log_std[j] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

double GaussianPolicy::entropy() const {
  double h = 0.0;
  for (double s : log_std) h += 0.5 + 0.5 * std::log(2.0 * std::numbers::pi) + s;
  return h;
}

GaussianPolicy make_policy(int obs_dim, int act_dim, const std::vector<int>& hidden, std::uint64_t seed,
                           double init_log_std) {
  std::vector<int> layers{obs_dim};
  layers.insert(layers.end(), hidden.begin(), hidden.end());
  layers.push_back(act_dim);
  GaussianPolicy p{Mlp(layers, OutputActivation::Identity, seed), {}, {}};
  p.log_std.assign(static_cast<std::size_t>(act_dim), init_log_std);
  // Small output layer so the initial mean action is near zero.
  const auto last = p.mean.num_layers() - 1;
  auto params = p.mean.params();
  for (std::size_t i = p.mean.weight_offset(last); i < params.size(); ++i) params[i] *= 0.01;
  return p;
}

nlohmann::json to_json(const GaussianPolicy& p) {
  nlohmann::json j;
  j["mean"] = to_json(p.mean);
  j["log_std"] = p.log_std;
  j["obs_scale"] = p.obs_scale;
  return j;
}

GaussianPolicy policy_from_json(const nlohmann::json& j) {
  GaussianPolicy p{mlp_from_json(j.at("mean")), j.at("log_std").get<std::vector<double>>(),
                   j.value("obs_scale", std::vector<double>{})};
  if (p.log_std.size() != static_cast<std::size_t>(p.act_dim())) throw std::invalid_argument("log_std dimension mismatch");
  return p;
}

std::vector<std::vector<double>> ToyQuadraticEnv::reset(std::uint64_t) {
  t_ = 0;
  return {{1.0}};
}

Environment::StepResult ToyQuadraticEnv::step(std::span<const double> actions) {
  const double a = std::clamp(actions[0], -kMaxAccel, kMaxAccel);
  ++t_;
  StepResult r;
  r.obs = {{1.0}};
  r.rewards = {-a * a};
  r.truncated = t_ >= episode_steps_;
  return r;
}

RingEnv::RingEnv(RingEnvConfig cfg) : cfg_(std::move(cfg)) {
  platoon_ = platoon_assign(cfg_.rollout.n_vehicles, cfg_.rollout.rv_penetration);
  cfg_.rollout.rv_controller = ControllerKind::Policy;
  cfg_.context.record_log = false;
  if (cfg_.reward == RewardKind::Follower) {
    if (platoon_.followers.empty()) throw std::invalid_argument("follower training needs a platoon of >= 2 RVs");
    if (!cfg_.leader_policy) throw std::invalid_argument("follower training needs a frozen leader policy");
  }
  if (cfg_.episode_steps < 1) throw std::invalid_argument("episode_steps must be >= 1");
}

int RingEnv::n_agents() const {
  return cfg_.reward == RewardKind::Follower ? static_cast<int>(platoon_.followers.size()) : platoon_.n_rv;
}

int RingEnv::obs_dim() const {
  return cfg_.reward == RewardKind::Follower ? static_cast<int>(kFollowerObsDim) : static_cast<int>(Observation::kDim);
}

std::vector<double> RingEnv::observation_scale(RewardKind kind, double speed_limit) {
  if (kind == RewardKind::Follower) {
    std::vector<double> s(kFollowerObsDim);
    for (std::size_t k = 0; k < kFollowerObsDim; ++k) s[k] = k % 2 == 0 ? 0.01 : 0.1;
    return s;
  }
  std::vector<double> s(Observation::kDim, 1.0);
  s[0] = 1.0 / speed_limit;
  s[1] = 1.0 / kSensingRange;
  s[2] = 0.1;
  return s;
}

std::vector<std::vector<double>> RingEnv::observations() const {
  std::vector<std::vector<double>> obs;
  const auto& w = sim_->world();
  if (cfg_.reward == RewardKind::Follower) {
    for (int f : platoon_.followers) obs.push_back(follower_observation(w, platoon_, static_cast<std::size_t>(f)));
  } else {
    for (int i = 0; i < platoon_.n_rv; ++i) {
      obs.push_back(observe(w, static_cast<std::size_t>(i), labels_[static_cast<std::size_t>(i)]).to_vector());
    }
  }
  return obs;
}

std::vector<std::vector<double>> RingEnv::reset(std::uint64_t seed) {
  auto rc = cfg_.rollout;
  rc.seed = seed;
  if (rc.warmup_steps + cfg_.episode_steps > rc.horizon_steps) {
    rc.horizon_steps = rc.warmup_steps + cfg_.episode_steps;
  }
  sim_ = std::make_unique<RingSimulation>(rc, cfg_.context);
  while (!sim_->controlling()) sim_->advance();
  t_ = 0;
  labels_.assign(static_cast<std::size_t>(platoon_.n_rv), CongestionLabel::NoVehicle);
  for (int i = 0; i < platoon_.n_rv; ++i) labels_[static_cast<std::size_t>(i)] = sim_->label_of(static_cast<std::size_t>(i));
  return observations();
}

Environment::StepResult RingEnv::step(std::span<const double> actions) {
  if (static_cast<int>(actions.size()) != n_agents()) throw std::invalid_argument("wrong number of actions");
  std::vector<double> rv(static_cast<std::size_t>(platoon_.n_rv));
  if (cfg_.reward == RewardKind::Follower) {
    rv[static_cast<std::size_t>(platoon_.leader)] = cfg_.leader_policy(sim_->world(), static_cast<std::size_t>(platoon_.leader));
    for (std::size_t k = 0; k < platoon_.followers.size(); ++k) rv[static_cast<std::size_t>(platoon_.followers[k])] = actions[k];
  } else {
    std::copy(actions.begin(), actions.end(), rv.begin());
  }
  for (auto& a : rv) a = std::clamp(a, -kMaxAccel, kMaxAccel);
  const auto prev_labels = labels_;
  sim_->advance(rv);
  ++t_;
  const auto& w = sim_->world();
  StepResult r;
  if (cfg_.reward == RewardKind::Follower) {
    for (int f : platoon_.followers) {
      const auto i = static_cast<std::size_t>(f);
      const auto& ahead = w.vehicles[w.leader_of(i)];
      r.rewards.push_back(reward_follower(headway(w, i), ahead.velocity - w.vehicles[i].velocity,
                                          w.vehicles[i].acceleration, cfg_.reward_params));
    }
  } else {
    const double mean_v = mean_velocity(w);
    for (int k = 0; k < platoon_.n_rv; ++k) {
      const auto i = static_cast<std::size_t>(k);
      const double a = w.vehicles[i].acceleration;
      r.rewards.push_back(cfg_.reward == RewardKind::Efficiency
                              ? reward_efficiency(w.vehicles[i].velocity, a, prev_labels[i], cfg_.reward_params)
                              : reward_safety(mean_v, a, prev_labels[i], cfg_.reward_params));
    }
  }
  for (int i = 0; i < platoon_.n_rv; ++i) labels_[static_cast<std::size_t>(i)] = sim_->label_of(static_cast<std::size_t>(i));
  r.obs = observations();
  r.truncated = t_ >= cfg_.episode_steps || sim_->done();
  return r;
}

PolicyFn leader_policy_fn(const GaussianPolicy& policy, const Mlp* classifier, LabelRules rules) {
  return [policy, classifier, rules](const World& w, std::size_t index) {
    const auto obs = observe(w, index, classifier, rules).to_vector();
    return std::clamp(policy.mean_action(obs).front(), -kMaxAccel, kMaxAccel);
  };
}

PolicyFn platoon_policy_fn(const GaussianPolicy& leader, const GaussianPolicy& follower, const Platoon& platoon,
                           const Mlp* classifier, LabelRules rules) {
  auto lead_fn = leader_policy_fn(leader, classifier, rules);
  return [lead_fn, follower, platoon](const World& w, std::size_t index) {
    if (static_cast<int>(index) == platoon.leader) return lead_fn(w, index);
    const auto obs = follower_observation(w, platoon, index);
    return std::clamp(follower.mean_action(obs).front(), -kMaxAccel, kMaxAccel);
  };
}

}  // namespace carl
