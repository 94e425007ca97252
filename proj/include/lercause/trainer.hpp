#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lercause/checkpoint.hpp"
#include "lercause/corpus.hpp"
#include "lercause/model.hpp"

namespace lercause::classifier {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t max_seq_len = 0;
  std::size_t fit_samples = 0;  // after oversampling
  std::size_t validation_samples = 0;

  const EpochStats& best() const { return epochs.at(best_epoch - 1); }
};

nlohmann::json to_json(const TrainReport& report);

/// Bias-corrected Adam over every trainable tensor.
class Adam {
 public:
  Adam(const Parameters& shape_like, double learning_rate, double beta1, double beta2, double epsilon);
  void step(Parameters& params, const Parameters& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  Parameters m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// 95th-percentile (nearest rank) token length, capped, and floored at the
/// shortest length the convolution and pooling accept.
std::size_t choose_max_seq_len(const std::vector<std::string>& texts, const ModelConfig& config);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Holds out a stratified validation slice, oversamples the rest to balance
/// classes, and runs Adam on mean binary cross-entropy with early stopping on
/// validation loss. The best epoch's parameters are restored. Deterministic
/// for a given config.seed.
std::pair<ModelCheckpoint, TrainReport> train(const std::vector<corpus::CorpusRecord>& records,
                                              const ModelConfig& config, const EpochCallback& on_epoch = {});

TokenBatch encode_batch(const std::vector<std::string>& texts, const ModelCheckpoint& checkpoint);

/// Probabilities for already-encoded sequences.
std::vector<double> forward(const ModelCheckpoint& checkpoint, const TokenBatch& batch, bool training_mode,
                            std::uint64_t dropout_seed = 0);

struct Prediction {
  corpus::Label label = corpus::Label::non_causal;
  double probability = 0.0;
};

/// Inference mode; causal iff probability >= config().threshold.
std::vector<Prediction> predict(const ModelCheckpoint& checkpoint, const std::vector<std::string>& texts);

corpus::Label label_for(double probability, double threshold);

/// Small architecture for finite-difference checks.
ModelConfig tiny_config();

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_tensor;
  std::size_t coordinates = 0;
};

/// Analytic gradients of a training-mode batch loss against central finite
/// differences for every coordinate of every trainable tensor.
/// Relative error is |a - n| / max(|a|, |n|), or |a - n| when both are below 1e-8.
inline constexpr double kGradientCheckStep = 1e-5;
GradientCheckResult gradient_check_detail(const ModelConfig& config, std::uint64_t seed,
                                          double step = kGradientCheckStep);
double gradient_check(const ModelConfig& config, std::uint64_t seed);

}  // namespace lercause::classifier
