#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "carl/rl.hpp"

namespace carl {

struct PpoConfig {
  double learning_rate = 5e-5;
  double gamma = 0.999;
  double lambda = 0.97;
  double kl_target = 0.02;
  double entropy_start = 0.1;
  double entropy_end = 0.01;
  double value_clip = 20.0;
  int sgd_iterations = 2;
  double clip_ratio = 0.2;
  int iterations = 200;
  int envs_per_iteration = 4;
  int minibatch_size = 512;
  double value_coef = 1.0;
  double init_log_std = 0.0;
  bool normalize_advantages = true;
  std::vector<int> hidden = {64, 32, 16};
  std::uint64_t seed = 0;
  /// Collect environments across threads; each env owns its seed and action stream either way.
  bool parallel = true;

  void validate() const;
  double entropy_coef(int iteration) const;
};

struct PpoIterationStats {
  int iteration = 0;
  double mean_reward = 0.0;  // mean undiscounted episode return per agent
  double kl = 0.0;
  double entropy_coef = 0.0;
  int sgd_passes = 0;
};

struct PpoResult {
  GaussianPolicy policy;
  Mlp value;
  std::vector<PpoIterationStats> curve;
};

/// One flattened experience sample.
struct Transition {
  std::vector<double> obs;  // scaled
  double action = 0.0;      // raw Gaussian sample
  double log_prob = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct Experience {
  std::vector<Transition> samples;
  std::vector<double> episode_returns;
};

/// Runs one episode per env seed with the current policy and computes GAE targets.
Experience collect(const Environment& env, const GaussianPolicy& policy, const Mlp& value,
                   const std::vector<std::uint64_t>& seeds, const PpoConfig& cfg);

/// Clipped surrogate + entropy loss gradient for the policy; returns (d mean params, d log_std).
struct PolicyGrad {
  std::vector<double> mean;
  std::vector<double> log_std;
  double loss = 0.0;
};
PolicyGrad policy_gradient(const GaussianPolicy& policy, std::span<const Transition* const> batch,
                           double clip_ratio, double entropy_coef);

using PpoCallback = std::function<void(const PpoIterationStats&)>;

PpoResult ppo_train(const Environment& env, const PpoConfig& cfg, std::vector<double> obs_scale = {},
                    const PpoCallback& on_iteration = {});

void write_curve_csv(const std::vector<PpoIterationStats>& curve, std::ostream& out);

}  // namespace carl
