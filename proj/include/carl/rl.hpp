#pragma once

#include <array>
#include <memory>
#include <vector>

#include "carl/nn.hpp"
#include "carl/rng.hpp"
#include "carl/rollout.hpp"
#include "carl/types.hpp"

namespace carl {

struct Observation {
  double v = 0.0;   // own velocity
  double dp = 0.0;  // bumper gap to the immediate leader
  double dv = 0.0;  // leader velocity minus own velocity
  CongestionLabel label = CongestionLabel::NoVehicle;

  static constexpr std::size_t kDim = 3 + kNumLabels;
  std::vector<double> to_vector() const;
};

/// Observation of RV `index` given the zone label.
Observation observe(const World& world, std::size_t index, CongestionLabel label);
/// Observation with the label taken from a classifier, or the rules when `classifier` is null.
Observation observe(const World& world, std::size_t index, const Mlp* classifier, const LabelRules& rules = {});

struct RewardParams {
  double eff_velocity = 0.75;
  double eff_accel = -2.0;
  double lambda1 = -10.0;
  double lambda2 = -10.0;
  double safe_velocity = 0.15;
  double safe_accel = -4.0;
  double lambda3 = -5.0;
  double lambda4 = -2.0;
  double lambda5 = 4.0;
  double lambda6 = -4.0;
  double lambda7 = 10.0;
};

double reward_efficiency(double v, double a, CongestionLabel c, const RewardParams& p = {});
double reward_safety(double mean_v, double a, CongestionLabel c, const RewardParams& p = {});
double reward_follower(double dp, double dv, double a, const RewardParams& p = {});

enum class RewardKind : std::uint8_t { Efficiency, Safety, Follower };
std::string_view to_string(RewardKind kind);
RewardKind parse_reward_kind(std::string_view text);

/// Contiguous RV block at indices [0, n_rv); the front vehicle (n_rv - 1) leads.
struct Platoon {
  int n_rv = 0;
  int leader = -1;
  std::vector<int> followers;
};

Platoon platoon_assign(int n_vehicles, double penetration);

inline constexpr int kPlatoonMax = 16;
inline constexpr std::size_t kFollowerObsDim = 2 * kPlatoonMax;

/// Positions (signed, along the ring) and velocities of every platoon member relative to follower
/// `index`, zero-padded to kPlatoonMax members.
std::vector<double> follower_observation(const World& world, const Platoon& platoon, std::size_t index);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// `values` holds V(s_0..s_{T-1}); `bootstrap` is V(s_T), used unless `terminal`.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                      bool terminal, double gamma, double lambda);

/// Diagonal Gaussian policy with a state-independent log standard deviation.
struct GaussianPolicy {
  Mlp mean;
  std::vector<double> log_std;
  /// Observation scaling applied before the network (elementwise multiply); empty means none.
  std::vector<double> obs_scale;

  int obs_dim() const { return mean.input_dim(); }
  int act_dim() const { return mean.output_dim(); }
  std::vector<double> prepare(std::span<const double> obs) const;
  std::vector<double> mean_action(std::span<const double> obs) const;
  double log_prob(std::span<const double> mu, std::span<const double> action) const;
  double entropy() const;
};

GaussianPolicy make_policy(int obs_dim, int act_dim, const std::vector<int>& hidden, std::uint64_t seed,
                           double init_log_std = 0.0);

nlohmann::json to_json(const GaussianPolicy& p);
GaussianPolicy policy_from_json(const nlohmann::json& j);

/// Multi-agent episodic environment sharing one policy across agents.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual std::vector<std::vector<double>> reset(std::uint64_t seed) = 0;

  struct StepResult {
    std::vector<std::vector<double>> obs;
    std::vector<double> rewards;
    bool terminal = false;   // true end of the task (no bootstrap)
    bool truncated = false;  // time limit (bootstrap from the value function)
  };
  virtual StepResult step(std::span<const double> actions) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Single agent, reward -a^2 on the clamped action, constant observation.
class ToyQuadraticEnv final : public Environment {
 public:
  explicit ToyQuadraticEnv(int episode_steps = 32) : episode_steps_(episode_steps) {}
  int n_agents() const override { return 1; }
  int obs_dim() const override { return 1; }
  std::vector<std::vector<double>> reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> actions) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ToyQuadraticEnv>(*this); }

 private:
  int episode_steps_;
  int t_ = 0;
};

struct RingEnvConfig {
  RolloutConfig rollout;
  RolloutContext context;
  RewardKind reward = RewardKind::Efficiency;
  RewardParams reward_params;
  long episode_steps = 1500;
  /// Frozen leader controller for follower training.
  PolicyFn leader_policy;
};

/// Ring rollout where the RVs are driven by the learner after an IDM warmup. Efficiency and
/// safety rewards control every RV; the follower reward controls the platoon followers.
class RingEnv final : public Environment {
 public:
  explicit RingEnv(RingEnvConfig cfg);
  int n_agents() const override;
  int obs_dim() const override;
  std::vector<std::vector<double>> reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> actions) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<RingEnv>(cfg_); }

  static std::vector<double> observation_scale(RewardKind kind, double speed_limit);

 private:
  std::vector<std::vector<double>> observations() const;

  RingEnvConfig cfg_;
  Platoon platoon_;
  std::unique_ptr<RingSimulation> sim_;
  std::vector<CongestionLabel> labels_;
  long t_ = 0;
};

/// Deterministic (mean-action) controller for the platoon leader, for use as a rollout policy.
PolicyFn leader_policy_fn(const GaussianPolicy& policy, const Mlp* classifier, LabelRules rules = {});
/// Leader plus follower policies for a platoon at the given penetration.
PolicyFn platoon_policy_fn(const GaussianPolicy& leader, const GaussianPolicy& follower, const Platoon& platoon,
                           const Mlp* classifier, LabelRules rules = {});

}  // namespace carl
