#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace carl {

using Matrix = std::vector<std::vector<double>>;

enum class OutputActivation : std::uint8_t { Identity, Softmax };
enum class LossKind : std::uint8_t { Mse, CrossEntropy };

/// Per-feature z-score. Empty means pass-through.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }
  static Normalizer fit(const Matrix& rows);
  void apply(std::span<double> x) const;
};

/// Dense tanh network. Parameters are flat: for each layer, W (n_out x n_in, row-major) then b.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, OutputActivation output, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  OutputActivation output() const { return output_; }
  std::size_t num_layers() const { return layer_sizes_.empty() ? 0 : layer_sizes_.size() - 1; }
  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  Normalizer normalizer;
  /// Optimizer steps applied so far; zero means untrained.
  long update_count = 0;

 private:
  std::vector<int> layer_sizes_;
  OutputActivation output_ = OutputActivation::Identity;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

/// (n_in + 1) * n_out summed over layers.
std::size_t param_count_for(const std::vector<int>& layer_sizes);

std::vector<double> forward(const Mlp& m, std::span<const double> x);
/// Row-parallel batch inference.
Matrix forward_batch(const Mlp& m, const Matrix& xs);
Matrix forward_batch_serial(const Mlp& m, const Matrix& xs);

/// Post-activation values of every layer for one input (activations[0] is the normalized input).
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
  const std::vector<double>& output() const { return activations.back(); }
};

ForwardTrace forward_trace(const Mlp& m, std::span<const double> x);

/// Accumulates dL/dtheta into `grad` given dL/d(pre-activation output) of the last layer.
/// For an identity head that is dL/d(output).
void backward(const Mlp& m, const ForwardTrace& trace, std::span<const double> d_logits,
              std::span<double> grad);

struct Batch {
  Matrix x;
  /// Regression targets, or class distributions (usually one-hot) for cross-entropy.
  Matrix y;
  /// Optional per-row loss weights; empty means 1.
  std::vector<double> weight;

  std::size_t size() const { return x.size(); }
};

struct Gradient {
  std::vector<double> values;
  double loss = 0.0;
};

/// Exact gradient of the mean loss. Rows are processed in fixed chunks whose partial sums are
/// combined in chunk order, so the result does not depend on the thread count.
Gradient grad(const Mlp& m, const Batch& batch, LossKind loss);
Gradient grad_serial(const Mlp& m, const Batch& batch, LossKind loss);
double loss_value(const Mlp& m, const Batch& batch, LossKind loss);

/// theta' = theta - lr g. Rejects non-finite gradients.
void sgd_step(Mlp& m, std::span<const double> g, double lr);

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(std::span<double> params, std::span<const double> g);
  void step(Mlp& m, std::span<const double> g);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Plain SGD, SGD with heavy-ball momentum, or Adam.
enum class OptimizerKind : std::uint8_t { Sgd, Momentum, Adam };

/// v' = mu v + g; theta' = theta - lr v'.
class MomentumSgd {
 public:
  explicit MomentumSgd(double lr = 0.01, double mu = 0.9) : lr_(lr), mu_(mu) {}
  void set_lr(double lr) { lr_ = lr; }
  void step(Mlp& m, std::span<const double> g);

 private:
  double lr_, mu_;
  std::vector<double> v_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;  // Momentum only
  /// Cosine schedule from learning_rate down to learning_rate * final_lr_fraction; 1 keeps it constant.
  double final_lr_fraction = 1.0;

  double lr_at(int epoch) const;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;  // cross-entropy only
  double val_accuracy = 0.0;
};

/// Minibatch training with a seeded shuffle each epoch. Validation stats are zero when
/// `validation` is empty.
std::vector<EpochStats> train(Mlp& m, const Batch& data, const Batch& validation, LossKind loss,
                              const TrainConfig& cfg);

/// Fraction of rows whose argmax output matches the argmax target.
double accuracy(const Mlp& m, const Batch& data);
std::size_t argmax(std::span<const double> values);

nlohmann::json to_json(const Mlp& m);
Mlp mlp_from_json(const nlohmann::json& j);
void save_mlp(const Mlp& m, const std::string& path, const nlohmann::json& meta = {});
Mlp load_mlp(const std::string& path);

bool all_finite(std::span<const double> values);

}  // namespace carl
