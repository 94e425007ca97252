#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lercause/random.hpp"

namespace lercause::classifier {

/// Thrown when a parameter tensor or input batch disagrees with the config.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::string layer, const std::string& message)
      : std::runtime_error(layer + ": " + message), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

struct ModelConfig {
  std::size_t embed_dim = 150;
  std::size_t conv_filters = 128;
  std::size_t conv_kernel = 5;
  std::size_t pool_size = 2;
  std::size_t lstm1_units = 128;
  std::size_t lstm2_units = 64;
  std::size_t dense_units = 64;
  double dropout_rate = 0.5;
  std::size_t max_seq_len = 0;  // 0: 95th percentile of training lengths
  std::size_t max_seq_len_cap = 200;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  double threshold = 0.5;
  double validation_fraction = 0.1;
  std::size_t min_freq = 1;
  std::uint64_t seed = 42;

  /// Shortest sequence that leaves one pooled step after the convolution.
  std::size_t min_seq_len() const noexcept { return conv_kernel + pool_size - 1; }
  std::size_t conv_steps() const noexcept { return max_seq_len - conv_kernel + 1; }
  std::size_t pooled_steps() const noexcept { return conv_steps() / pool_size; }

  /// Throws std::invalid_argument on zero sizes or out-of-range ratios.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Keys absent from `object` keep the values already in `base`; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& object, ModelConfig base = {});

struct LstmParams {
  Eigen::MatrixXd input_weights;      // 4H x In, gate order i, f, g, o
  Eigen::MatrixXd recurrent_weights;  // 4H x H
  Eigen::MatrixXd bias;               // 4H x 1
};

/// Trainable tensors. Vectors are stored as n x 1 matrices.
struct Parameters {
  Eigen::MatrixXd embedding;  // V x D
  Eigen::MatrixXd conv_weight;  // F x (K*D), window position major
  Eigen::MatrixXd conv_bias;
  Eigen::MatrixXd bn_gamma;
  Eigen::MatrixXd bn_beta;
  LstmParams lstm1_fwd, lstm1_bwd;
  LstmParams lstm2_fwd, lstm2_bwd;
  Eigen::MatrixXd dense1_weight;  // U x 2*H2
  Eigen::MatrixXd dense1_bias;
  Eigen::MatrixXd dense2_weight;  // 1 x U
  Eigen::MatrixXd dense2_bias;

  template <class Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  /// Same shapes, all zeros.
  Parameters zeros_like() const;

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn& fn) {
    fn("embedding", self.embedding);
    fn("conv.weight", self.conv_weight);
    fn("conv.bias", self.conv_bias);
    fn("bn.gamma", self.bn_gamma);
    fn("bn.beta", self.bn_beta);
    visit_lstm("lstm1.fwd", self.lstm1_fwd, fn);
    visit_lstm("lstm1.bwd", self.lstm1_bwd, fn);
    visit_lstm("lstm2.fwd", self.lstm2_fwd, fn);
    visit_lstm("lstm2.bwd", self.lstm2_bwd, fn);
    fn("dense1.weight", self.dense1_weight);
    fn("dense1.bias", self.dense1_bias);
    fn("dense2.weight", self.dense2_weight);
    fn("dense2.bias", self.dense2_bias);
  }

  template <class Lstm, class Fn>
  static void visit_lstm(const std::string& prefix, Lstm& p, Fn& fn) {
    fn(prefix + ".input_weights", p.input_weights);
    fn(prefix + ".recurrent_weights", p.recurrent_weights);
    fn(prefix + ".bias", p.bias);
  }
};

/// Batch-norm running statistics, updated outside of gradient descent.
struct RunningStats {
  Eigen::MatrixXd mean;      // F x 1
  Eigen::MatrixXd variance;  // F x 1
};

/// Named tensor shapes (rows, cols) implied by a config and vocabulary size,
/// in parameter visiting order followed by the running statistics.
std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> expected_shapes(
    const ModelConfig& config, std::size_t vocab_size);

using TokenBatch = std::vector<std::vector<int>>;

struct LstmTrace {
  std::vector<Eigen::MatrixXd> i, f, g, o, c, tanh_c, h;  // indexed by time step, H x B
};

/// Activations kept by a forward pass for the backward pass.
struct ForwardCache {
  bool training = false;
  TokenBatch tokens;
  std::vector<Eigen::MatrixXd> embedded;  // L x (D x B)
  std::vector<Eigen::MatrixXd> conv_pre;  // Lc x (F x B)
  std::vector<Eigen::MatrixXd> normalized;  // x-hat, Lc x (F x B)
  Eigen::VectorXd batch_mean, batch_variance, inv_std;
  std::vector<Eigen::MatrixXd> bn_out;  // Lc x (F x B)
  std::vector<Eigen::MatrixXi> pool_argmax;  // Lp x (F x B): source conv step
  std::vector<Eigen::MatrixXd> pooled;  // Lp x (F x B)
  LstmTrace l1_fwd, l1_bwd, l2_fwd, l2_bwd;
  std::vector<Eigen::MatrixXd> l1_mask;  // Lp x (2H1 x B)
  std::vector<Eigen::MatrixXd> l1_out;   // after dropout
  Eigen::MatrixXd l2_mask;               // 2H2 x B
  Eigen::MatrixXd l2_out;                // after dropout
  Eigen::MatrixXd dense1_pre;
  Eigen::MatrixXd dense1_out;
  Eigen::RowVectorXd logits;
  Eigen::RowVectorXd probabilities;
};

/// Embedding -> conv(ReLU) -> batch norm -> max pool -> BiLSTM (sequences) ->
/// dropout -> BiLSTM (final states) -> dropout -> dense(ReLU) -> dense(sigmoid).
class Network {
 public:
  Network() = default;
  /// Zero-filled parameters of the right shapes; call initialize() before training.
  Network(ModelConfig config, std::size_t vocab_size);

  void initialize(Rng& rng);

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& mutable_config() noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  Parameters& params() noexcept { return params_; }
  const Parameters& params() const noexcept { return params_; }
  RunningStats& running() noexcept { return running_; }
  const RunningStats& running() const noexcept { return running_; }

  /// Throws ShapeError naming the first tensor whose shape disagrees with the config.
  void validate_shapes() const;

  /// Training mode uses batch statistics and dropout masks drawn from `dropout_seed`.
  ForwardCache forward(const TokenBatch& batch, bool training, std::uint64_t dropout_seed = 0) const;

  /// Mean binary cross-entropy of the cached probabilities against 0/1 targets.
  static double loss(const ForwardCache& cache, std::span<const double> targets);

  /// Gradient of loss() with respect to every trainable tensor. Requires a
  /// training-mode cache.
  Parameters backward(const ForwardCache& cache, std::span<const double> targets) const;

  /// Exponential moving average of the cached batch statistics.
  void update_running_stats(const ForwardCache& cache);

  friend bool operator==(const Network& a, const Network& b);

 private:
  ModelConfig config_;
  std::size_t vocab_size_ = 0;
  Parameters params_;
  RunningStats running_;
};

}  // namespace lercause::classifier
