#include "carl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "carl/csv.hpp"

namespace carl {

void PpoConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("ppo learning_rate must be > 0");
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(lambda > 0 && lambda <= 1)) throw std::invalid_argument("lambda must lie in (0, 1]");
  if (iterations < 1 || envs_per_iteration < 1 || sgd_iterations < 1 || minibatch_size < 1) {
    throw std::invalid_argument("ppo iteration counts must be >= 1");
  }
  if (!(clip_ratio > 0)) throw std::invalid_argument("clip_ratio must be > 0");
}

double PpoConfig::entropy_coef(int iteration) const {
  if (iterations <= 1) return entropy_start;
  const double f = static_cast<double>(iteration) / static_cast<double>(iterations - 1);
  return entropy_start + (entropy_end - entropy_start) * std::clamp(f, 0.0, 1.0);
}

Experience collect(const Environment& env, const GaussianPolicy& policy, const Mlp& value,
                   const std::vector<std::uint64_t>& seeds, const PpoConfig& cfg) {
  std::vector<Experience> per_env(seeds.size());
  const auto n_envs = static_cast<long>(seeds.size());
  auto run_one = [&](long e) {
    const auto k = static_cast<std::size_t>(e);
    auto local = env.clone();
    Rng rng(derive_seed(seeds[k], 0xac7));
    auto obs = local->reset(seeds[k]);
    const auto n_agents = static_cast<std::size_t>(local->n_agents());
    std::vector<std::vector<Transition>> traj(n_agents);
    std::vector<std::vector<double>> rewards(n_agents);
    bool terminal = false;
    while (true) {
      std::vector<double> actions(n_agents);
      for (std::size_t a = 0; a < n_agents; ++a) {
        Transition t;
        t.obs = policy.prepare(obs[a]);
        const auto mu = forward(policy.mean, t.obs);
        t.action = mu[0] + std::exp(policy.log_std[0]) * rng.normal();
        t.log_prob = policy.log_prob(mu, std::span<const double>(&t.action, 1));
        t.value = forward(value, t.obs)[0];
        actions[a] = t.action;
        traj[a].push_back(std::move(t));
      }
      auto res = local->step(actions);
      for (std::size_t a = 0; a < n_agents; ++a) rewards[a].push_back(res.rewards[a]);
      obs = std::move(res.obs);
      if (res.terminal || res.truncated) {
        terminal = res.terminal;
        break;
      }
    }
    auto& out = per_env[k];
    for (std::size_t a = 0; a < n_agents; ++a) {
      std::vector<double> values;
      for (const auto& t : traj[a]) values.push_back(t.value);
      const double bootstrap = terminal ? 0.0 : forward(value, policy.prepare(obs[a]))[0];
      const auto g = compute_gae(rewards[a], values, bootstrap, terminal, cfg.gamma, cfg.lambda);
      for (std::size_t s = 0; s < traj[a].size(); ++s) {
        traj[a][s].advantage = g.advantages[s];
        traj[a][s].ret = g.returns[s];
      }
      out.episode_returns.push_back(std::accumulate(rewards[a].begin(), rewards[a].end(), 0.0));
      out.samples.insert(out.samples.end(), std::make_move_iterator(traj[a].begin()),
                         std::make_move_iterator(traj[a].end()));
    }
  };
  if (cfg.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long e = 0; e < n_envs; ++e) run_one(e);
  } else {
    for (long e = 0; e < n_envs; ++e) run_one(e);
  }
  Experience all;
  for (auto& e : per_env) {
    all.samples.insert(all.samples.end(), std::make_move_iterator(e.samples.begin()),
                       std::make_move_iterator(e.samples.end()));
    all.episode_returns.insert(all.episode_returns.end(), e.episode_returns.begin(), e.episode_returns.end());
  }
  return all;
}

PolicyGrad policy_gradient(const GaussianPolicy& policy, std::span<const Transition* const> batch,
                           double clip_ratio, double entropy_coef) {
  PolicyGrad g;
  g.mean.assign(policy.mean.param_count(), 0.0);
  g.log_std.assign(policy.log_std.size(), 0.0);
  const double n = static_cast<double>(batch.size());
  const double sigma = std::exp(policy.log_std[0]);
  for (const Transition* t : batch) {
    const auto trace = forward_trace(policy.mean, t->obs);
    const double mu = trace.output()[0];
    const double logp = policy.log_prob(trace.output(), std::span<const double>(&t->action, 1));
    const double ratio = std::exp(logp - t->log_prob);
    const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
    const double surr1 = ratio * t->advantage;
    const double surr2 = clipped * t->advantage;
    g.loss -= std::min(surr1, surr2) / n;
    if (surr1 <= surr2) {
      const double d_logp = -ratio * t->advantage / n;
      const double z = (t->action - mu) / sigma;
      const double d_mu = d_logp * z / sigma;
      backward(policy.mean, trace, std::span<const double>(&d_mu, 1), g.mean);
      g.log_std[0] += d_logp * (z * z - 1.0);
    }
  }
  g.loss -= entropy_coef * policy.entropy();
  g.log_std[0] -= entropy_coef;
  return g;
}

namespace {

double approx_kl(const GaussianPolicy& policy, const std::vector<Transition>& samples) {
  if (samples.empty()) return 0.0;
  double kl = 0.0;
  for (const auto& t : samples) {
    const auto mu = forward(policy.mean, t.obs);
    const double log_ratio = policy.log_prob(mu, std::span<const double>(&t.action, 1)) - t.log_prob;
    kl += std::expm1(log_ratio) - log_ratio;
  }
  return kl / static_cast<double>(samples.size());
}

std::vector<double> value_gradient(const Mlp& value, std::span<const Transition* const> batch, double clip,
                                   double coef) {
  std::vector<double> g(value.param_count(), 0.0);
  const double n = static_cast<double>(batch.size());
  for (const Transition* t : batch) {
    const auto trace = forward_trace(value, t->obs);
    const double v = trace.output()[0];
    const double v_clipped = t->value + std::clamp(v - t->value, -clip, clip);
    const double l1 = (v - t->ret) * (v - t->ret);
    const double l2 = (v_clipped - t->ret) * (v_clipped - t->ret);
    double d = 0.0;
    if (l1 >= l2) {
      d = 2.0 * (v - t->ret);
    } else if (std::abs(v - t->value) < clip) {
      d = 2.0 * (v_clipped - t->ret);
    }
    d *= coef / n;
    backward(value, trace, std::span<const double>(&d, 1), g);
  }
  return g;
}

}  // namespace

PpoResult ppo_train(const Environment& env, const PpoConfig& cfg, std::vector<double> obs_scale,
                    const PpoCallback& on_iteration) {
  cfg.validate();
  PpoResult r;
  r.policy = make_policy(env.obs_dim(), 1, cfg.hidden, derive_seed(cfg.seed, 11), cfg.init_log_std);
  r.policy.obs_scale = std::move(obs_scale);
  std::vector<int> vlayers{env.obs_dim()};
  vlayers.insert(vlayers.end(), cfg.hidden.begin(), cfg.hidden.end());
  vlayers.push_back(1);
  r.value = Mlp(vlayers, OutputActivation::Identity, derive_seed(cfg.seed, 12));
  Adam policy_opt(cfg.learning_rate);
  Adam value_opt(cfg.learning_rate);
  Rng shuffle_rng(derive_seed(cfg.seed, 13));

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<std::uint64_t> seeds;
    for (int e = 0; e < cfg.envs_per_iteration; ++e) {
      seeds.push_back(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(it) * 64 + static_cast<std::uint64_t>(e)));
    }
    auto exp = collect(env, r.policy, r.value, seeds, cfg);
    if (exp.samples.empty()) throw std::runtime_error("ppo: environment produced no samples");
    if (cfg.normalize_advantages && exp.samples.size() > 1) {
      double mean = 0.0, var = 0.0;
      for (const auto& t : exp.samples) mean += t.advantage;
      mean /= static_cast<double>(exp.samples.size());
      for (const auto& t : exp.samples) var += (t.advantage - mean) * (t.advantage - mean);
      const double sd = std::sqrt(var / static_cast<double>(exp.samples.size())) + 1e-8;
      for (auto& t : exp.samples) t.advantage = (t.advantage - mean) / sd;
    }
    const double ent = cfg.entropy_coef(it);
    PpoIterationStats stats;
    stats.iteration = it;
    stats.entropy_coef = ent;
    stats.mean_reward = std::accumulate(exp.episode_returns.begin(), exp.episode_returns.end(), 0.0) /
                        static_cast<double>(exp.episode_returns.size());
    std::vector<const Transition*> order;
    for (const auto& t : exp.samples) order.push_back(&t);
    for (int pass = 0; pass < cfg.sgd_iterations; ++pass) {
      shuffle_rng.shuffle(std::span<const Transition*>(order));
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
        const std::span<const Transition* const> mb(order.data() + start, end - start);
        auto pg = policy_gradient(r.policy, mb, cfg.clip_ratio, ent);
        if (!std::isfinite(pg.loss) || !all_finite(pg.mean) || !all_finite(pg.log_std)) {
          throw std::runtime_error("ppo: non-finite policy loss at iteration " + std::to_string(it) +
                                   " (log_std " + std::to_string(r.policy.log_std[0]) + ")");
        }
        std::vector<double> flat(r.policy.mean.params().begin(), r.policy.mean.params().end());
        flat.insert(flat.end(), r.policy.log_std.begin(), r.policy.log_std.end());
        std::vector<double> gflat = std::move(pg.mean);
        gflat.insert(gflat.end(), pg.log_std.begin(), pg.log_std.end());
        policy_opt.step(flat, gflat);
        std::copy(flat.begin(), flat.begin() + static_cast<long>(r.policy.mean.param_count()),
                  r.policy.mean.params().begin());
        std::copy(flat.begin() + static_cast<long>(r.policy.mean.param_count()), flat.end(), r.policy.log_std.begin());
        ++r.policy.mean.update_count;
        const auto vg = value_gradient(r.value, mb, cfg.value_clip, cfg.value_coef);
        value_opt.step(r.value, vg);
      }
      ++stats.sgd_passes;
      stats.kl = approx_kl(r.policy, exp.samples);
      if (stats.kl > cfg.kl_target) break;
    }
    r.curve.push_back(stats);
    if (on_iteration) on_iteration(stats);
  }
  return r;
}

void write_curve_csv(const std::vector<PpoIterationStats>& curve, std::ostream& out) {
  out << "iteration,mean_reward,kl,entropy_coef\n";
  for (const auto& s : curve) {
    out << s.iteration << ',' << csv::fmt(s.mean_reward) << ',' << csv::fmt(s.kl) << ',' << csv::fmt(s.entropy_coef)
        << '\n';
  }
}

}  // namespace carl
