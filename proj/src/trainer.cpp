#include "lercause/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lercause/random.hpp"
#include "lercause/vocab.hpp"

namespace lercause::classifier {

using corpus::CorpusRecord;
using corpus::Label;
using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

json to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"validation_accuracy", e.validation_accuracy}});
  }
  return json{{"epochs", epochs},
              {"best_epoch", report.best_epoch},
              {"stopped_early", report.stopped_early},
              {"max_seq_len", report.max_seq_len},
              {"fit_samples", report.fit_samples},
              {"validation_samples", report.validation_samples}};
}

namespace {

std::vector<MatrixXd*> tensors_of(Parameters& p) {
  std::vector<MatrixXd*> out;
  p.for_each([&](std::string_view, MatrixXd& m) { out.push_back(&m); });
  return out;
}

std::vector<const MatrixXd*> tensors_of(const Parameters& p) {
  std::vector<const MatrixXd*> out;
  p.for_each([&](std::string_view, const MatrixXd& m) { out.push_back(&m); });
  return out;
}

std::vector<double> targets_of(const std::vector<CorpusRecord>& records, std::span<const std::size_t> idx) {
  std::vector<double> y;
  y.reserve(idx.size());
  for (const auto i : idx) y.push_back(records[i].label == Label::causal ? 1.0 : 0.0);
  return y;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate_split(const Network& net, const TokenBatch& tokens, const std::vector<double>& targets) {
  EvalResult r;
  const std::size_t n = tokens.size();
  const std::size_t bs = net.config().batch_size;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    const TokenBatch batch(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                           tokens.begin() + static_cast<std::ptrdiff_t>(end));
    const std::span<const double> y(targets.data() + start, end - start);
    const auto cache = net.forward(batch, false);
    r.loss += Network::loss(cache, y) * static_cast<double>(end - start);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const bool predicted = cache.probabilities(static_cast<Index>(k)) >= net.config().threshold;
      if (predicted == (y[k] > 0.5)) ++correct;
    }
  }
  r.loss /= static_cast<double>(n);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

}  // namespace

Adam::Adam(const Parameters& shape_like, double learning_rate, double beta1, double beta2, double epsilon)
    : m_(shape_like.zeros_like()),
      v_(shape_like.zeros_like()),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

void Adam::step(Parameters& params, const Parameters& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = tensors_of(params);
  auto g = tensors_of(grads);
  auto m = tensors_of(m_);
  auto v = tensors_of(v_);
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k]->array() = beta1_ * m[k]->array() + (1.0 - beta1_) * g[k]->array();
    v[k]->array() = beta2_ * v[k]->array() + (1.0 - beta2_) * g[k]->array().square();
    p[k]->array() -= lr_ * (m[k]->array() / bc1) / ((v[k]->array() / bc2).sqrt() + eps_);
  }
}

std::size_t choose_max_seq_len(const std::vector<std::string>& texts, const ModelConfig& config) {
  if (config.max_seq_len != 0) return config.max_seq_len;
  std::vector<std::size_t> lengths;
  lengths.reserve(texts.size());
  for (const auto& t : texts) lengths.push_back(tokenize(t).size());
  std::size_t chosen = 0;
  if (!lengths.empty()) {
    std::sort(lengths.begin(), lengths.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(lengths.size())));
    chosen = lengths[std::max<std::size_t>(rank, 1) - 1];
  }
  return std::max(config.min_seq_len(), std::min(chosen, config.max_seq_len_cap));
}

TokenBatch encode_batch(const std::vector<std::string>& texts, const ModelCheckpoint& checkpoint) {
  TokenBatch out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(encode(t, checkpoint.vocab, checkpoint.config().max_seq_len));
  return out;
}

std::pair<ModelCheckpoint, TrainReport> train(const std::vector<CorpusRecord>& records, const ModelConfig& config,
                                              const EpochCallback& on_epoch) {
  config.validate();
  if (records.empty()) throw corpus::CorpusError("cannot train on an empty corpus");
  Rng rng(config.seed);

  // Stratified validation hold-out; every class keeps at least one fit sample.
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label == Label::causal ? 1 : 0].push_back(i);
  std::vector<std::size_t> fit_idx;
  std::vector<std::size_t> val_idx;
  for (auto& idx : by_class) {
    shuffle_in_place(idx, rng);
    auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(idx.size()) + 0.5));
    if (!idx.empty()) n_val = std::min(n_val, idx.size() - 1);
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    fit_idx.insert(fit_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::vector<CorpusRecord> fit;
  fit.reserve(fit_idx.size());
  for (const auto i : fit_idx) fit.push_back(records[i]);
  const auto balanced = corpus::resample_balance(fit, rng());
  if (val_idx.empty()) val_idx = fit_idx;

  std::vector<std::string> fit_texts;
  fit_texts.reserve(fit.size());
  for (const auto& r : fit) fit_texts.push_back(r.text);

  ModelConfig resolved = config;
  resolved.max_seq_len = choose_max_seq_len(fit_texts, config);

  ModelCheckpoint checkpoint;
  checkpoint.vocab = build_vocab(fit_texts, config.min_freq);
  checkpoint.network = Network(resolved, checkpoint.vocab.size());
  checkpoint.network.initialize(rng);
  Network& net = checkpoint.network;

  TokenBatch fit_tokens;
  std::vector<double> fit_targets;
  for (const auto& r : balanced) {
    fit_tokens.push_back(encode(r.text, checkpoint.vocab, resolved.max_seq_len));
    fit_targets.push_back(r.label == Label::causal ? 1.0 : 0.0);
  }
  TokenBatch val_tokens;
  for (const auto i : val_idx) val_tokens.push_back(encode(records[i].text, checkpoint.vocab, resolved.max_seq_len));
  const auto val_targets = targets_of(records, val_idx);

  TrainReport report;
  report.max_seq_len = resolved.max_seq_len;
  report.fit_samples = fit_tokens.size();
  report.validation_samples = val_tokens.size();

  Adam adam(net.params(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  Network best = net;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  std::vector<std::size_t> order(fit_tokens.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      TokenBatch batch;
      std::vector<double> y;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(fit_tokens[order[k]]);
        y.push_back(fit_targets[order[k]]);
      }
      const auto cache = net.forward(batch, true, rng());
      loss_sum += Network::loss(cache, y) * static_cast<double>(y.size());
      const auto grads = net.backward(cache, y);
      adam.step(net.params(), grads);
      net.update_running_stats(cache);
    }

    const auto val = evaluate_split(net, val_tokens, val_targets);
    EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.accuracy};
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (val.loss < best_loss) {
      best_loss = val.loss;
      best = net;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  net = std::move(best);
  return {std::move(checkpoint), std::move(report)};
}

std::vector<double> forward(const ModelCheckpoint& checkpoint, const TokenBatch& batch, bool training_mode,
                            std::uint64_t dropout_seed) {
  const auto cache = checkpoint.network.forward(batch, training_mode, dropout_seed);
  return {cache.probabilities.begin(), cache.probabilities.end()};
}

Label label_for(double probability, double threshold) {
  return probability >= threshold ? Label::causal : Label::non_causal;
}

std::vector<Prediction> predict(const ModelCheckpoint& checkpoint, const std::vector<std::string>& texts) {
  std::vector<Prediction> out;
  out.reserve(texts.size());
  const std::size_t bs = checkpoint.config().batch_size;
  for (std::size_t start = 0; start < texts.size(); start += bs) {
    const std::size_t end = std::min(texts.size(), start + bs);
    const std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    for (const double p : forward(checkpoint, encode_batch(chunk, checkpoint), false)) {
      out.push_back({label_for(p, checkpoint.config().threshold), p});
    }
  }
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 4;
  c.conv_filters = 3;
  c.conv_kernel = 2;
  c.pool_size = 2;
  c.lstm1_units = 3;
  c.lstm2_units = 2;
  c.dense_units = 3;
  c.max_seq_len = 6;
  c.batch_size = 2;
  return c;
}

GradientCheckResult gradient_check_detail(const ModelConfig& config, std::uint64_t seed, double step) {
  ModelConfig c = config;
  if (c.max_seq_len == 0) c.max_seq_len = c.min_seq_len() + 1;
  constexpr std::size_t kVocab = 7;
  constexpr double kTiny = 1e-8;

  Rng rng(seed);
  Network net(c, kVocab);
  net.initialize(rng);
  // Nonzero biases and batch-norm affine terms so every path carries signal; unit-scale
  // embeddings keep the batch-norm variance well above its epsilon.
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  net.params().for_each([&](std::string_view name, MatrixXd& m) {
    if (name == "embedding") {
      m = m.unaryExpr([&](double) { return unit(rng); });
    } else if (name.find("bias") != std::string_view::npos || name.starts_with("bn.")) {
      m = m.unaryExpr([&](double v) { return v + jitter(rng); });
    }
  });

  std::uniform_int_distribution<int> token(0, static_cast<int>(kVocab) - 1);
  TokenBatch batch(c.batch_size, std::vector<int>(c.max_seq_len));
  for (auto& row : batch) {
    for (auto& id : row) id = token(rng);
  }
  std::vector<double> targets(c.batch_size);
  for (std::size_t b = 0; b < targets.size(); ++b) targets[b] = static_cast<double>(b % 2);
  const std::uint64_t dropout_seed = rng();

  const auto analytic = net.backward(net.forward(batch, true, dropout_seed), targets);
  auto logits_at = [&] { return Eigen::VectorXd(net.forward(batch, true, dropout_seed).logits); };
  // Mean BCE difference taken per sample before rounding, so the loss magnitude adds no cancellation noise.
  auto loss_difference = [&](const Eigen::VectorXd& up, const Eigen::VectorXd& down) {
    double total = 0.0;
    for (Index b = 0; b < up.size(); ++b) {
      const double dz = up(b) - down(b);
      const double p_down = 1.0 / (1.0 + std::exp(-down(b)));
      total += std::log1p(p_down * std::expm1(dz)) - targets[static_cast<std::size_t>(b)] * dz;
    }
    return total / static_cast<double>(up.size());
  };

  GradientCheckResult result;
  std::vector<std::string> names;
  net.params().for_each([&](std::string_view name, MatrixXd&) { names.emplace_back(name); });
  auto params = tensors_of(net.params());
  const auto grads = tensors_of(analytic);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double worst = 0.0;
    MatrixXd& m = *params[k];
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) {
        const double saved = m(i, j);
        m(i, j) = saved + step;
        const auto up = logits_at();
        m(i, j) = saved - step;
        const auto down = logits_at();
        m(i, j) = saved;
        const double numeric = loss_difference(up, down) / (2.0 * step);
        const double a = (*grads[k])(i, j);
        const double scale = std::max(std::abs(a), std::abs(numeric));
        const double err = scale < kTiny ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
        worst = std::max(worst, err);
        ++result.coordinates;
      }
    }
    result.per_tensor[names[k]] = worst;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

double gradient_check(const ModelConfig& config, std::uint64_t seed) {
  return gradient_check_detail(config, seed).max_relative_error;
}

}  // namespace lercause::classifier
