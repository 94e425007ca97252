#include "lercause/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace lercause::classifier {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(conv_filters, "conv_filters");
  positive(conv_kernel, "conv_kernel");
  positive(pool_size, "pool_size");
  positive(lstm1_units, "lstm1_units");
  positive(lstm2_units, "lstm2_units");
  positive(dense_units, "dense_units");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  positive(min_freq, "min_freq");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0) || !(bn_epsilon > 0.0)) throw std::invalid_argument("epsilons must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw std::invalid_argument("bn_momentum must lie in [0, 1)");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }
  if (max_seq_len != 0 && max_seq_len < min_seq_len()) {
    throw std::invalid_argument("max_seq_len must be at least conv_kernel + pool_size - 1 = " +
                                std::to_string(min_seq_len()));
  }
  if (max_seq_len_cap < min_seq_len()) throw std::invalid_argument("max_seq_len_cap is below the minimum length");
}

#define LERCAUSE_CONFIG_FIELDS(X)                                                                             \
  X(embed_dim) X(conv_filters) X(conv_kernel) X(pool_size) X(lstm1_units) X(lstm2_units) X(dense_units)     \
  X(dropout_rate) X(max_seq_len) X(max_seq_len_cap) X(learning_rate) X(adam_beta1) X(adam_beta2)            \
  X(adam_epsilon) X(batch_size) X(max_epochs) X(patience) X(bn_momentum) X(bn_epsilon) X(threshold)         \
  X(validation_fraction) X(min_freq) X(seed)

json to_json(const ModelConfig& config) {
  json out = json::object();
#define X(name) out[#name] = config.name;
  LERCAUSE_CONFIG_FIELDS(X)
#undef X
  return out;
}

ModelConfig config_from_json(const json& object, ModelConfig base) {
  if (!object.is_object()) throw std::invalid_argument("model config must be a JSON object");
  static const std::set<std::string> known = {
#define X(name) #name,
      LERCAUSE_CONFIG_FIELDS(X)
#undef X
  };
  for (const auto& [key, value] : object.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  try {
#define X(name) \
  if (object.contains(#name)) base.name = object.at(#name).get<decltype(base.name)>();
    LERCAUSE_CONFIG_FIELDS(X)
#undef X
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad model config value: ") + e.what());
  }
  base.validate();
  return base;
}

#undef LERCAUSE_CONFIG_FIELDS

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](std::string_view, MatrixXd& m) { m.setZero(); });
  return out;
}

std::vector<std::pair<std::string, std::pair<Index, Index>>> expected_shapes(const ModelConfig& c,
                                                                            std::size_t vocab_size) {
  const auto V = static_cast<Index>(vocab_size);
  const auto D = static_cast<Index>(c.embed_dim);
  const auto F = static_cast<Index>(c.conv_filters);
  const auto K = static_cast<Index>(c.conv_kernel);
  const auto H1 = static_cast<Index>(c.lstm1_units);
  const auto H2 = static_cast<Index>(c.lstm2_units);
  const auto U = static_cast<Index>(c.dense_units);
  std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes = {
      {"embedding", {V, D}}, {"conv.weight", {F, K * D}}, {"conv.bias", {F, 1}},
      {"bn.gamma", {F, 1}},  {"bn.beta", {F, 1}}};
  auto lstm = [&](const std::string& prefix, Index in, Index h) {
    shapes.push_back({prefix + ".input_weights", {4 * h, in}});
    shapes.push_back({prefix + ".recurrent_weights", {4 * h, h}});
    shapes.push_back({prefix + ".bias", {4 * h, 1}});
  };
  lstm("lstm1.fwd", F, H1);
  lstm("lstm1.bwd", F, H1);
  lstm("lstm2.fwd", 2 * H1, H2);
  lstm("lstm2.bwd", 2 * H1, H2);
  shapes.push_back({"dense1.weight", {U, 2 * H2}});
  shapes.push_back({"dense1.bias", {U, 1}});
  shapes.push_back({"dense2.weight", {1, U}});
  shapes.push_back({"dense2.bias", {1, 1}});
  shapes.push_back({"bn.running_mean", {F, 1}});
  shapes.push_back({"bn.running_var", {F, 1}});
  return shapes;
}

Network::Network(ModelConfig config, std::size_t vocab_size) : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size_ < 2) throw std::invalid_argument("vocabulary must contain the pad and OOV ids");
  std::size_t k = 0;
  const auto shapes = expected_shapes(config_, vocab_size_);
  params_.for_each([&](std::string_view, MatrixXd& m) {
    const auto& [rows, cols] = shapes[k++].second;
    m = MatrixXd::Zero(rows, cols);
  });
  running_.mean = MatrixXd::Zero(static_cast<Index>(config_.conv_filters), 1);
  running_.variance = MatrixXd::Ones(static_cast<Index>(config_.conv_filters), 1);
  params_.bn_gamma.setOnes();
}

void Network::initialize(Rng& rng) {
  auto uniform = [&rng](MatrixXd& m, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
  };
  auto glorot = [&](MatrixXd& m) { uniform(m, std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()))); };
  auto lstm = [&](LstmParams& p) {
    glorot(p.input_weights);
    glorot(p.recurrent_weights);
    p.bias.setZero();
    const Index h = p.recurrent_weights.cols();
    p.bias.middleRows(h, h).setOnes();  // forget gate
  };
  uniform(params_.embedding, 0.05);
  glorot(params_.conv_weight);
  params_.conv_bias.setZero();
  params_.bn_gamma.setOnes();
  params_.bn_beta.setZero();
  lstm(params_.lstm1_fwd);
  lstm(params_.lstm1_bwd);
  lstm(params_.lstm2_fwd);
  lstm(params_.lstm2_bwd);
  glorot(params_.dense1_weight);
  params_.dense1_bias.setZero();
  glorot(params_.dense2_weight);
  params_.dense2_bias.setZero();
  running_.mean.setZero();
  running_.variance.setOnes();
}

void Network::validate_shapes() const {
  const auto shapes = expected_shapes(config_, vocab_size_);
  std::size_t k = 0;
  auto check = [&](std::string_view name, const MatrixXd& m) {
    const auto& [expected_name, shape] = shapes[k++];
    if (m.rows() != shape.first || m.cols() != shape.second) {
      throw ShapeError(std::string(name), "expected shape [" + std::to_string(shape.first) + ", " +
                                              std::to_string(shape.second) + "], found [" +
                                              std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "]");
    }
  };
  params_.for_each(check);
  check("bn.running_mean", running_.mean);
  check("bn.running_var", running_.variance);
}

bool operator==(const Network& a, const Network& b) {
  if (!(a.config_ == b.config_) || a.vocab_size_ != b.vocab_size_) return false;
  std::vector<const MatrixXd*> lhs;
  std::vector<const MatrixXd*> rhs;
  a.params_.for_each([&](std::string_view, const MatrixXd& m) { lhs.push_back(&m); });
  b.params_.for_each([&](std::string_view, const MatrixXd& m) { rhs.push_back(&m); });
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i]->rows() != rhs[i]->rows() || lhs[i]->cols() != rhs[i]->cols() || *lhs[i] != *rhs[i]) return false;
  }
  return a.running_.mean == b.running_.mean && a.running_.variance == b.running_.variance;
}

namespace {

MatrixXd sigmoid(const MatrixXd& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& pre) {
  return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

void run_lstm(const LstmParams& p, const std::vector<MatrixXd>& xs, bool reverse, LstmTrace& tr) {
  const auto T = xs.size();
  const Index H = p.recurrent_weights.cols();
  const Index B = xs.front().cols();
  for (auto* v : {&tr.i, &tr.f, &tr.g, &tr.o, &tr.c, &tr.tanh_c, &tr.h}) v->assign(T, MatrixXd());
  MatrixXd h_prev = MatrixXd::Zero(H, B);
  MatrixXd c_prev = MatrixXd::Zero(H, B);
  MatrixXd gates(4 * H, B);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    gates.noalias() = p.input_weights * xs[t];
    gates.noalias() += p.recurrent_weights * h_prev;
    gates.colwise() += p.bias.col(0);
    tr.i[t] = sigmoid(gates.topRows(H));
    tr.f[t] = sigmoid(gates.middleRows(H, H));
    tr.g[t] = gates.middleRows(2 * H, H).array().tanh().matrix();
    tr.o[t] = sigmoid(gates.bottomRows(H));
    tr.c[t] = tr.f[t].cwiseProduct(c_prev) + tr.i[t].cwiseProduct(tr.g[t]);
    tr.tanh_c[t] = tr.c[t].array().tanh().matrix();
    tr.h[t] = tr.o[t].cwiseProduct(tr.tanh_c[t]);
    h_prev = tr.h[t];
    c_prev = tr.c[t];
  }
}

// Accumulates parameter gradients into `grad` and input gradients into `dxs`.
// `dh_out[t]` is the loss gradient flowing into the emitted hidden state at t.
void lstm_backward(const LstmParams& p, const std::vector<MatrixXd>& xs, bool reverse, const LstmTrace& tr,
                   const std::vector<MatrixXd>& dh_out, LstmParams& grad, std::vector<MatrixXd>& dxs) {
  const auto T = xs.size();
  const Index H = p.recurrent_weights.cols();
  const Index B = xs.front().cols();
  MatrixXd dh_next = MatrixXd::Zero(H, B);
  MatrixXd dc_next = MatrixXd::Zero(H, B);
  const MatrixXd zero = MatrixXd::Zero(H, B);
  MatrixXd dgates(4 * H, B);
  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = reverse ? T - 1 - s : s;
    const bool has_prev = s > 0;
    const std::size_t tp = reverse ? t + 1 : t - 1;
    const MatrixXd& h_prev = has_prev ? tr.h[tp] : zero;
    const MatrixXd& c_prev = has_prev ? tr.c[tp] : zero;

    const MatrixXd dh = dh_next + dh_out[t];
    const auto one_minus_tc2 = (1.0 - tr.tanh_c[t].array().square());
    const MatrixXd dc = dc_next + (dh.array() * tr.o[t].array() * one_minus_tc2).matrix();
    const auto& i = tr.i[t].array();
    const auto& f = tr.f[t].array();
    const auto& g = tr.g[t].array();
    const auto& o = tr.o[t].array();
    dgates.topRows(H) = (dc.array() * g * i * (1.0 - i)).matrix();
    dgates.middleRows(H, H) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
    dgates.middleRows(2 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
    dgates.bottomRows(H) = (dh.array() * tr.tanh_c[t].array() * o * (1.0 - o)).matrix();

    grad.input_weights.noalias() += dgates * xs[t].transpose();
    if (has_prev) grad.recurrent_weights.noalias() += dgates * h_prev.transpose();
    grad.bias.col(0) += dgates.rowwise().sum();
    dxs[t].noalias() += p.input_weights.transpose() * dgates;
    dh_next.noalias() = p.recurrent_weights.transpose() * dgates;
    dc_next = (dc.array() * f).matrix();
  }
}

MatrixXd dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  if (rate <= 0.0) return MatrixXd::Ones(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 - rate;
  MatrixXd mask(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) mask(i, j) = u(rng) < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace

ForwardCache Network::forward(const TokenBatch& batch, bool training, std::uint64_t dropout_seed) const {
  const auto& c = config_;
  if (batch.empty()) throw ShapeError("input", "batch is empty");
  const std::size_t L = c.max_seq_len;
  for (const auto& row : batch) {
    if (row.size() != L) {
      throw ShapeError("input", "sequence length " + std::to_string(row.size()) + " differs from max_seq_len " +
                                    std::to_string(L));
    }
    for (const int id : row) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
        throw ShapeError("embedding", "token id " + std::to_string(id) + " outside vocabulary of size " +
                                          std::to_string(vocab_size_));
      }
    }
  }
  validate_shapes();

  const auto B = static_cast<Index>(batch.size());
  const auto D = static_cast<Index>(c.embed_dim);
  const auto F = static_cast<Index>(c.conv_filters);
  const auto K = c.conv_kernel;
  const auto P = c.pool_size;
  const std::size_t Lc = c.conv_steps();
  const std::size_t Lp = c.pooled_steps();

  ForwardCache cache;
  cache.training = training;
  cache.tokens = batch;
  Rng rng(dropout_seed);

  cache.embedded.assign(L, MatrixXd(D, B));
  for (std::size_t t = 0; t < L; ++t) {
    for (Index b = 0; b < B; ++b) {
      cache.embedded[t].col(b) = params_.embedding.row(batch[static_cast<std::size_t>(b)][t]).transpose();
    }
  }

  cache.conv_pre.assign(Lc, MatrixXd(F, B));
  std::vector<MatrixXd> activated(Lc);
  for (std::size_t t = 0; t < Lc; ++t) {
    MatrixXd& z = cache.conv_pre[t];
    z.colwise() = params_.conv_bias.col(0);
    for (std::size_t k = 0; k < K; ++k) {
      z.noalias() += params_.conv_weight.middleCols(static_cast<Index>(k) * D, D) * cache.embedded[t + k];
    }
    activated[t] = relu(z);
  }

  if (training) {
    const double n = static_cast<double>(Lc) * static_cast<double>(B);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(F);
    for (const auto& a : activated) mean += a.rowwise().sum();
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(F);
    for (const auto& a : activated) var += (a.colwise() - mean).array().square().matrix().rowwise().sum();
    var /= n;
    cache.batch_mean = mean;
    cache.batch_variance = var;
  } else {
    cache.batch_mean = running_.mean.col(0);
    cache.batch_variance = running_.variance.col(0);
  }
  cache.inv_std = (cache.batch_variance.array() + c.bn_epsilon).rsqrt().matrix();

  cache.normalized.resize(Lc);
  cache.bn_out.resize(Lc);
  for (std::size_t t = 0; t < Lc; ++t) {
    cache.normalized[t] = ((activated[t].colwise() - cache.batch_mean).array().colwise() * cache.inv_std.array()).matrix();
    cache.bn_out[t] = ((cache.normalized[t].array().colwise() * params_.bn_gamma.col(0).array()).colwise() +
                       params_.bn_beta.col(0).array())
                          .matrix();
  }

  cache.pooled.assign(Lp, MatrixXd(F, B));
  cache.pool_argmax.assign(Lp, Eigen::MatrixXi(F, B));
  for (std::size_t w = 0; w < Lp; ++w) {
    for (Index b = 0; b < B; ++b) {
      for (Index f = 0; f < F; ++f) {
        std::size_t best = w * P;
        double best_v = cache.bn_out[best](f, b);
        for (std::size_t t = w * P + 1; t < (w + 1) * P; ++t) {
          if (cache.bn_out[t](f, b) > best_v) {
            best_v = cache.bn_out[t](f, b);
            best = t;
          }
        }
        cache.pooled[w](f, b) = best_v;
        cache.pool_argmax[w](f, b) = static_cast<int>(best);
      }
    }
  }

  const auto H1 = static_cast<Index>(c.lstm1_units);
  const auto H2 = static_cast<Index>(c.lstm2_units);
  run_lstm(params_.lstm1_fwd, cache.pooled, false, cache.l1_fwd);
  run_lstm(params_.lstm1_bwd, cache.pooled, true, cache.l1_bwd);
  cache.l1_mask.resize(Lp);
  cache.l1_out.resize(Lp);
  for (std::size_t t = 0; t < Lp; ++t) {
    MatrixXd joined(2 * H1, B);
    joined.topRows(H1) = cache.l1_fwd.h[t];
    joined.bottomRows(H1) = cache.l1_bwd.h[t];
    cache.l1_mask[t] = training ? dropout_mask(2 * H1, B, c.dropout_rate, rng) : MatrixXd::Ones(2 * H1, B);
    cache.l1_out[t] = joined.cwiseProduct(cache.l1_mask[t]);
  }

  run_lstm(params_.lstm2_fwd, cache.l1_out, false, cache.l2_fwd);
  run_lstm(params_.lstm2_bwd, cache.l1_out, true, cache.l2_bwd);
  MatrixXd final_state(2 * H2, B);
  final_state.topRows(H2) = cache.l2_fwd.h[Lp - 1];
  final_state.bottomRows(H2) = cache.l2_bwd.h[0];
  cache.l2_mask = training ? dropout_mask(2 * H2, B, c.dropout_rate, rng) : MatrixXd::Ones(2 * H2, B);
  cache.l2_out = final_state.cwiseProduct(cache.l2_mask);

  cache.dense1_pre = params_.dense1_weight * cache.l2_out;
  cache.dense1_pre.colwise() += params_.dense1_bias.col(0);
  cache.dense1_out = relu(cache.dense1_pre);
  cache.logits = (params_.dense2_weight * cache.dense1_out).row(0);
  cache.logits.array() += params_.dense2_bias(0, 0);
  constexpr double kEdge = 1e-15;
  cache.probabilities = sigmoid(cache.logits).row(0).array().min(1.0 - kEdge).max(kEdge).matrix();
  return cache;
}

double Network::loss(const ForwardCache& cache, std::span<const double> targets) {
  const auto B = cache.logits.size();
  if (static_cast<Index>(targets.size()) != B) throw std::invalid_argument("target count differs from batch size");
  double total = 0.0;
  for (Index b = 0; b < B; ++b) {
    const double z = cache.logits(b);
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    total += softplus - targets[static_cast<std::size_t>(b)] * z;
  }
  return total / static_cast<double>(B);
}

Parameters Network::backward(const ForwardCache& cache, std::span<const double> targets) const {
  if (!cache.training) throw std::logic_error("backward requires a training-mode forward pass");
  const auto& c = config_;
  const auto B = cache.logits.size();
  if (static_cast<Index>(targets.size()) != B) throw std::invalid_argument("target count differs from batch size");
  const auto D = static_cast<Index>(c.embed_dim);
  const auto F = static_cast<Index>(c.conv_filters);
  const auto H1 = static_cast<Index>(c.lstm1_units);
  const auto H2 = static_cast<Index>(c.lstm2_units);
  const std::size_t L = c.max_seq_len;
  const std::size_t Lc = c.conv_steps();
  const std::size_t Lp = c.pooled_steps();

  Parameters grad = params_.zeros_like();

  Eigen::RowVectorXd dlogit = sigmoid(cache.logits).row(0);
  for (Index b = 0; b < B; ++b) dlogit(b) -= targets[static_cast<std::size_t>(b)];
  dlogit /= static_cast<double>(B);

  grad.dense2_weight.noalias() = dlogit * cache.dense1_out.transpose();
  grad.dense2_bias(0, 0) = dlogit.sum();
  const MatrixXd d_dense1 =
      (params_.dense2_weight.transpose() * dlogit).cwiseProduct(relu_mask(cache.dense1_pre));
  grad.dense1_weight.noalias() = d_dense1 * cache.l2_out.transpose();
  grad.dense1_bias.col(0) = d_dense1.rowwise().sum();
  const MatrixXd d_final = (params_.dense1_weight.transpose() * d_dense1).cwiseProduct(cache.l2_mask);

  std::vector<MatrixXd> dh2_fwd(Lp, MatrixXd::Zero(H2, B));
  std::vector<MatrixXd> dh2_bwd(Lp, MatrixXd::Zero(H2, B));
  dh2_fwd[Lp - 1] = d_final.topRows(H2);
  dh2_bwd[0] = d_final.bottomRows(H2);
  std::vector<MatrixXd> d_l1_out(Lp, MatrixXd::Zero(2 * H1, B));
  lstm_backward(params_.lstm2_fwd, cache.l1_out, false, cache.l2_fwd, dh2_fwd, grad.lstm2_fwd, d_l1_out);
  lstm_backward(params_.lstm2_bwd, cache.l1_out, true, cache.l2_bwd, dh2_bwd, grad.lstm2_bwd, d_l1_out);

  std::vector<MatrixXd> dh1_fwd(Lp);
  std::vector<MatrixXd> dh1_bwd(Lp);
  for (std::size_t t = 0; t < Lp; ++t) {
    const MatrixXd d = d_l1_out[t].cwiseProduct(cache.l1_mask[t]);
    dh1_fwd[t] = d.topRows(H1);
    dh1_bwd[t] = d.bottomRows(H1);
  }
  std::vector<MatrixXd> d_pooled(Lp, MatrixXd::Zero(F, B));
  lstm_backward(params_.lstm1_fwd, cache.pooled, false, cache.l1_fwd, dh1_fwd, grad.lstm1_fwd, d_pooled);
  lstm_backward(params_.lstm1_bwd, cache.pooled, true, cache.l1_bwd, dh1_bwd, grad.lstm1_bwd, d_pooled);

  std::vector<MatrixXd> d_bn(Lc, MatrixXd::Zero(F, B));
  for (std::size_t w = 0; w < Lp; ++w) {
    for (Index b = 0; b < B; ++b) {
      for (Index f = 0; f < F; ++f) {
        d_bn[static_cast<std::size_t>(cache.pool_argmax[w](f, b))](f, b) += d_pooled[w](f, b);
      }
    }
  }

  // Batch-norm backward with batch statistics.
  const double n = static_cast<double>(Lc) * static_cast<double>(B);
  for (std::size_t t = 0; t < Lc; ++t) {
    grad.bn_gamma.col(0) += d_bn[t].cwiseProduct(cache.normalized[t]).rowwise().sum();
    grad.bn_beta.col(0) += d_bn[t].rowwise().sum();
  }
  const Eigen::VectorXd sum_dxhat = grad.bn_beta.col(0).cwiseProduct(params_.bn_gamma.col(0));
  const Eigen::VectorXd sum_dxhat_xhat = grad.bn_gamma.col(0).cwiseProduct(params_.bn_gamma.col(0));

  std::vector<MatrixXd> d_embedded(L, MatrixXd::Zero(D, B));
  for (std::size_t t = 0; t < Lc; ++t) {
    const auto dxhat = (d_bn[t].array().colwise() * params_.bn_gamma.col(0).array());
    MatrixXd d_act = ((n * dxhat).colwise() - sum_dxhat.array() -
                      (cache.normalized[t].array().colwise() * sum_dxhat_xhat.array()))
                         .matrix();
    d_act = (d_act.array().colwise() * (cache.inv_std.array() / n)).matrix();
    const MatrixXd d_conv = d_act.cwiseProduct(relu_mask(cache.conv_pre[t]));
    grad.conv_bias.col(0) += d_conv.rowwise().sum();
    for (std::size_t k = 0; k < c.conv_kernel; ++k) {
      const Index off = static_cast<Index>(k) * D;
      grad.conv_weight.middleCols(off, D).noalias() += d_conv * cache.embedded[t + k].transpose();
      d_embedded[t + k].noalias() += params_.conv_weight.middleCols(off, D).transpose() * d_conv;
    }
  }

  for (std::size_t t = 0; t < L; ++t) {
    for (Index b = 0; b < B; ++b) {
      grad.embedding.row(cache.tokens[static_cast<std::size_t>(b)][t]) += d_embedded[t].col(b).transpose();
    }
  }
  return grad;
}

void Network::update_running_stats(const ForwardCache& cache) {
  if (!cache.training) return;
  const double m = config_.bn_momentum;
  running_.mean.col(0) = m * running_.mean.col(0) + (1.0 - m) * cache.batch_mean;
  running_.variance.col(0) = m * running_.variance.col(0) + (1.0 - m) * cache.batch_variance;
}

}  // namespace lercause::classifier
