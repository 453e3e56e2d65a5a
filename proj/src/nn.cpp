#include "carl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "carl/rng.hpp"

namespace carl {

namespace {

constexpr std::size_t kChunkRows = 32;
constexpr int kFormatVersion = 1;

void softmax_inplace(std::vector<double>& z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : z) v /= total;
}

// Loss of one row and, if requested, dL/dlogits scaled by `scale`.
double row_loss(const std::vector<double>& out, std::span<const double> y, LossKind loss,
                double scale, std::vector<double>* d_logits) {
  const std::size_t k = out.size();
  if (y.size() != k) throw std::invalid_argument("target dimension mismatch");
  double value = 0.0;
  if (d_logits) d_logits->assign(k, 0.0);
  if (loss == LossKind::Mse) {
    for (std::size_t i = 0; i < k; ++i) {
      const double e = out[i] - y[i];
      value += e * e;
      if (d_logits) (*d_logits)[i] = 2.0 * e * scale;
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      if (y[i] != 0.0) value -= y[i] * std::log(std::max(out[i], 1e-300));
      if (d_logits) (*d_logits)[i] = (out[i] - y[i]) * scale;
    }
  }
  return value;
}

void accumulate_rows(const Mlp& m, const Batch& batch, LossKind loss, std::size_t begin,
                     std::size_t end, std::vector<double>& g, double& loss_sum) {
  const double n = static_cast<double>(batch.size());
  std::vector<double> d_logits;
  for (std::size_t r = begin; r < end; ++r) {
    const double w = batch.weight.empty() ? 1.0 : batch.weight[r];
    const auto trace = forward_trace(m, batch.x[r]);
    loss_sum += w * row_loss(trace.output(), batch.y[r], loss, w / n, &d_logits);
    backward(m, trace, d_logits, g);
  }
}

void check_batch(const Mlp& m, const Batch& batch, LossKind loss) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  if (batch.y.size() != batch.size()) throw std::invalid_argument("batch x/y size mismatch");
  if (!batch.weight.empty() && batch.weight.size() != batch.size()) {
    throw std::invalid_argument("batch weight size mismatch");
  }
  if (loss == LossKind::CrossEntropy && m.output() != OutputActivation::Softmax) {
    throw std::invalid_argument("cross-entropy requires a softmax head");
  }
}

}  // namespace

Normalizer Normalizer::fit(const Matrix& rows) {
  Normalizer n;
  if (rows.empty()) return n;
  const std::size_t d = rows.front().size();
  n.mean.assign(d, 0.0);
  n.stddev.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) n.mean[j] += r[j];
  }
  for (auto& v : n.mean) v /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) n.stddev[j] += (r[j] - n.mean[j]) * (r[j] - n.mean[j]);
  }
  for (auto& v : n.stddev) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    if (v < 1e-12) v = 1.0;
  }
  return n;
}

void Normalizer::apply(std::span<double> x) const {
  if (empty()) return;
  if (x.size() != mean.size()) throw std::invalid_argument("normalizer dimension mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / stddev[j];
}

std::size_t param_count_for(const std::vector<int>& layer_sizes) {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    total += static_cast<std::size_t>(layer_sizes[l] + 1) * static_cast<std::size_t>(layer_sizes[l + 1]);
  }
  return total;
}

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output, std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)), output_(output) {
  if (layer_sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least two layer sizes");
  for (int s : layer_sizes_) {
    if (s <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
  }
  params_.assign(param_count_for(layer_sizes_), 0.0);
  Rng rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    offsets_.push_back(offset);
    const auto n_in = static_cast<std::size_t>(layer_sizes_[l]);
    const auto n_out = static_cast<std::size_t>(layer_sizes_[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    for (std::size_t i = 0; i < (n_in + 1) * n_out; ++i) params_[offset + i] = rng.uniform(-bound, bound);
    offset += (n_in + 1) * n_out;
  }
}

std::size_t Mlp::bias_offset(std::size_t layer) const {
  return offsets_[layer] +
         static_cast<std::size_t>(layer_sizes_[layer]) * static_cast<std::size_t>(layer_sizes_[layer + 1]);
}

ForwardTrace forward_trace(const Mlp& m, std::span<const double> x) {
  if (m.num_layers() == 0) throw std::invalid_argument("forward on an empty network");
  if (x.size() != static_cast<std::size_t>(m.input_dim())) {
    throw std::invalid_argument("input dimension " + std::to_string(x.size()) + " != " +
                                std::to_string(m.input_dim()));
  }
  ForwardTrace trace;
  trace.activations.reserve(m.num_layers() + 1);
  trace.activations.emplace_back(x.begin(), x.end());
  m.normalizer.apply(trace.activations.back());
  const auto p = m.params();
  const auto& sizes = m.layer_sizes();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto n_in = static_cast<std::size_t>(sizes[l]);
    const auto n_out = static_cast<std::size_t>(sizes[l + 1]);
    const auto& in = trace.activations.back();
    std::vector<double> z(n_out);
    const double* w = p.data() + m.weight_offset(l);
    const double* b = p.data() + m.bias_offset(l);
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += w[o * n_in + i] * in[i];
      z[o] = acc;
    }
    const bool last = l + 1 == m.num_layers();
    if (!last) {
      for (auto& v : z) v = std::tanh(v);
    } else if (m.output() == OutputActivation::Softmax) {
      softmax_inplace(z);
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

std::vector<double> forward(const Mlp& m, std::span<const double> x) {
  auto trace = forward_trace(m, x);
  return std::move(trace.activations.back());
}

Matrix forward_batch(const Mlp& m, const Matrix& xs) {
  Matrix out(xs.size());
  const auto n = static_cast<long>(xs.size());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) out[static_cast<std::size_t>(r)] = forward(m, xs[static_cast<std::size_t>(r)]);
  return out;
}

Matrix forward_batch_serial(const Mlp& m, const Matrix& xs) {
  Matrix out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(forward(m, x));
  return out;
}

void backward(const Mlp& m, const ForwardTrace& trace, std::span<const double> d_logits,
              std::span<double> grad) {
  if (grad.size() != m.param_count()) throw std::invalid_argument("gradient size mismatch");
  const auto p = m.params();
  const auto& sizes = m.layer_sizes();
  std::vector<double> delta(d_logits.begin(), d_logits.end());
  for (std::size_t l = m.num_layers(); l-- > 0;) {
    const auto n_in = static_cast<std::size_t>(sizes[l]);
    const auto n_out = static_cast<std::size_t>(sizes[l + 1]);
    const auto& in = trace.activations[l];
    double* gw = grad.data() + m.weight_offset(l);
    double* gb = grad.data() + m.bias_offset(l);
    for (std::size_t o = 0; o < n_out; ++o) {
      for (std::size_t i = 0; i < n_in; ++i) gw[o * n_in + i] += delta[o] * in[i];
      gb[o] += delta[o];
    }
    if (l == 0) break;
    const double* w = p.data() + m.weight_offset(l);
    std::vector<double> prev(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      for (std::size_t i = 0; i < n_in; ++i) prev[i] += w[o * n_in + i] * delta[o];
    }
    for (std::size_t i = 0; i < n_in; ++i) prev[i] *= 1.0 - in[i] * in[i];
    delta = std::move(prev);
  }
}

Gradient grad(const Mlp& m, const Batch& batch, LossKind loss) {
  check_batch(m, batch, loss);
  const std::size_t n_chunks = (batch.size() + kChunkRows - 1) / kChunkRows;
  std::vector<std::vector<double>> partial(n_chunks, std::vector<double>(m.param_count(), 0.0));
  std::vector<double> partial_loss(n_chunks, 0.0);
  const auto chunks = static_cast<long>(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (long c = 0; c < chunks; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    const std::size_t begin = cu * kChunkRows;
    const std::size_t end = std::min(batch.size(), begin + kChunkRows);
    accumulate_rows(m, batch, loss, begin, end, partial[cu], partial_loss[cu]);
  }
  Gradient g;
  g.values.assign(m.param_count(), 0.0);
  double loss_sum = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] += partial[c][i];
    loss_sum += partial_loss[c];
  }
  g.loss = loss_sum / static_cast<double>(batch.size());
  return g;
}

// Same chunking and combine order as grad(), one chunk at a time.
Gradient grad_serial(const Mlp& m, const Batch& batch, LossKind loss) {
  check_batch(m, batch, loss);
  Gradient g;
  g.values.assign(m.param_count(), 0.0);
  double loss_sum = 0.0;
  std::vector<double> partial(m.param_count());
  for (std::size_t begin = 0; begin < batch.size(); begin += kChunkRows) {
    std::fill(partial.begin(), partial.end(), 0.0);
    double partial_loss = 0.0;
    accumulate_rows(m, batch, loss, begin, std::min(batch.size(), begin + kChunkRows), partial, partial_loss);
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] += partial[i];
    loss_sum += partial_loss;
  }
  g.loss = loss_sum / static_cast<double>(batch.size());
  return g;
}

double loss_value(const Mlp& m, const Batch& batch, LossKind loss) {
  check_batch(m, batch, loss);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const double w = batch.weight.empty() ? 1.0 : batch.weight[r];
    total += w * row_loss(forward(m, batch.x[r]), batch.y[r], loss, 0.0, nullptr);
  }
  return total / static_cast<double>(batch.size());
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void sgd_step(Mlp& m, std::span<const double> g, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (g.size() != m.param_count()) throw std::invalid_argument("gradient size mismatch");
  if (!all_finite(g)) throw std::runtime_error("non-finite gradient rejected");
  auto p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  ++m.update_count;
}

void Adam::step(std::span<double> params, std::span<const double> g) {
  if (g.size() != params.size()) throw std::invalid_argument("gradient size mismatch");
  if (!all_finite(g)) throw std::runtime_error("non-finite gradient rejected");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Adam::step(Mlp& m, std::span<const double> g) {
  step(m.params(), g);
  ++m.update_count;
}

void MomentumSgd::step(Mlp& m, std::span<const double> g) {
  if (g.size() != m.param_count()) throw std::invalid_argument("gradient size mismatch");
  if (!all_finite(g)) throw std::runtime_error("non-finite gradient rejected");
  if (v_.size() != g.size()) v_.assign(g.size(), 0.0);
  auto p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v_[i] = mu_ * v_[i] + g[i];
    p[i] -= lr_ * v_[i];
  }
  ++m.update_count;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(final_lr_fraction > 0.0) || final_lr_fraction > 1.0) {
    throw std::invalid_argument("final_lr_fraction must lie in (0, 1]");
  }
}

double TrainConfig::lr_at(int epoch) const {
  if (epochs <= 1) return learning_rate;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  const double f = final_lr_fraction;
  return learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double accuracy(const Mlp& m, const Batch& data) {
  if (data.size() == 0) return 0.0;
  const auto out = forward_batch(m, data.x);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < data.size(); ++r) hits += argmax(out[r]) == argmax(data.y[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<EpochStats> train(Mlp& m, const Batch& data, const Batch& validation, LossKind loss,
                              const TrainConfig& cfg) {
  cfg.validate();
  check_batch(m, data, loss);
  Rng rng(cfg.seed);
  Adam adam(cfg.learning_rate);
  MomentumSgd heavy_ball(cfg.learning_rate, cfg.momentum);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> history;
  const bool classify = loss == LossKind::CrossEntropy;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.lr_at(epoch);
    adam.set_lr(lr);
    heavy_ball.set_lr(lr);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Batch mb;
      for (std::size_t k = start; k < end; ++k) {
        mb.x.push_back(data.x[order[k]]);
        mb.y.push_back(data.y[order[k]]);
        if (!data.weight.empty()) mb.weight.push_back(data.weight[order[k]]);
      }
      const auto g = grad(m, mb, loss);
      if (!std::isfinite(g.loss)) throw std::runtime_error("non-finite loss during training");
      if (cfg.optimizer == OptimizerKind::Adam) {
        adam.step(m, g.values);
      } else if (cfg.optimizer == OptimizerKind::Momentum) {
        heavy_ball.step(m, g.values);
      } else {
        sgd_step(m, g.values, lr);
      }
    }
    EpochStats s;
    s.epoch = epoch + 1;
    s.train_loss = loss_value(m, data, loss);
    if (classify) s.train_accuracy = accuracy(m, data);
    if (validation.size() > 0) {
      s.val_loss = loss_value(m, validation, loss);
      if (classify) s.val_accuracy = accuracy(m, validation);
    }
    history.push_back(s);
  }
  return history;
}

nlohmann::json to_json(const Mlp& m) {
  nlohmann::json j;
  j["format"] = "carl-mlp";
  j["version"] = kFormatVersion;
  j["layer_sizes"] = m.layer_sizes();
  j["output"] = m.output() == OutputActivation::Softmax ? "softmax" : "identity";
  j["hidden_activation"] = "tanh";
  j["params"] = std::vector<double>(m.params().begin(), m.params().end());
  j["norm_mean"] = m.normalizer.mean;
  j["norm_std"] = m.normalizer.stddev;
  j["update_count"] = m.update_count;
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "carl-mlp") throw std::invalid_argument("not a carl-mlp model");
  if (j.value("version", 0) != kFormatVersion) throw std::invalid_argument("unsupported model version");
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  const auto output = j.at("output").get<std::string>() == "softmax" ? OutputActivation::Softmax
                                                                       : OutputActivation::Identity;
  Mlp m(sizes, output, 0);
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != m.param_count()) throw std::invalid_argument("model parameter count mismatch");
  std::copy(params.begin(), params.end(), m.params().begin());
  m.normalizer.mean = j.value("norm_mean", std::vector<double>{});
  m.normalizer.stddev = j.value("norm_std", std::vector<double>{});
  if (m.normalizer.mean.size() != m.normalizer.stddev.size() ||
      (!m.normalizer.empty() && m.normalizer.mean.size() != static_cast<std::size_t>(m.input_dim()))) {
    throw std::invalid_argument("model normalizer has the wrong dimension");
  }
  m.update_count = j.value("update_count", 0L);
  return m;
}

void save_mlp(const Mlp& m, const std::string& path, const nlohmann::json& meta) {
  auto j = to_json(m);
  if (!meta.is_null()) j["meta"] = meta;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << '\n';
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file " + path);
  return mlp_from_json(nlohmann::json::parse(in));
}

}  // namespace carl
