#include <gtest/gtest.h>

#include <cmath>

#include "lercause/model.hpp"
#include "lercause/trainer.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace lercause::classifier;
using lercause::Rng;
using lercause::testing::Gen;

TokenBatch random_batch(Gen& g, const ModelConfig& c, std::size_t vocab, std::size_t rows) {
  TokenBatch batch(rows, std::vector<int>(c.max_seq_len));
  for (auto& row : batch) {
    for (auto& id : row) id = static_cast<int>(lercause::testing::uniform(g, 0, vocab - 1));
  }
  return batch;
}

Network tiny_network(std::uint64_t seed, std::size_t vocab = 9) {
  Network net(tiny_config(), vocab);
  Rng rng(seed);
  net.initialize(rng);
  return net;
}

TEST(Network, DefaultArchitectureShapes) {
  ModelConfig c;
  c.max_seq_len = 54;
  ASSERT_EQ(c.embed_dim, 150u);
  ASSERT_EQ(c.conv_filters, 128u);
  ASSERT_EQ(c.conv_kernel, 5u);
  ASSERT_EQ(c.lstm1_units, 128u);
  ASSERT_EQ(c.lstm2_units, 64u);
  Network net(c, 20);
  Rng rng(1);
  net.initialize(rng);
  Gen g(2);
  const std::size_t B = 2;
  const auto cache = net.forward(random_batch(g, c, 20, B), false);
  ASSERT_EQ(cache.embedded.size(), 54u);
  EXPECT_EQ(cache.embedded[0].rows(), 150);
  ASSERT_EQ(cache.conv_pre.size(), 50u);
  EXPECT_EQ(cache.conv_pre[0].rows(), 128);
  ASSERT_EQ(cache.pooled.size(), 25u);
  EXPECT_EQ(cache.pooled[0].rows(), 128);
  ASSERT_EQ(cache.l1_out.size(), 25u);
  EXPECT_EQ(cache.l1_out[0].rows(), 256);
  EXPECT_EQ(cache.l2_out.rows(), 128);
  EXPECT_EQ(cache.dense1_out.rows(), 64);
  EXPECT_EQ(cache.probabilities.size(), static_cast<Eigen::Index>(B));
}

TEST(Network, ExpectedShapesCoverEveryTensor) {
  const auto c = tiny_config();
  const auto shapes = expected_shapes(c, 9);
  std::size_t trainable = 0;
  Network(c, 9).params().for_each([&](std::string_view, const Eigen::MatrixXd&) { ++trainable; });
  EXPECT_EQ(shapes.size(), trainable + 2);  // plus the two running statistics
}

TEST(Network, ZeroFinalLayerGivesOneHalf) {
  auto net = tiny_network(3);
  net.params().dense2_weight.setZero();
  net.params().dense2_bias.setZero();
  Gen g(4);
  const auto batch = random_batch(g, net.config(), 9, 5);
  for (const bool training : {false, true}) {
    const auto cache = net.forward(batch, training, 11);
    for (Eigen::Index b = 0; b < cache.probabilities.size(); ++b) EXPECT_EQ(cache.probabilities(b), 0.5);
  }
}

TEST(Network, IdenticalRowsGiveIdenticalOutputs) {
  const auto net = tiny_network(5);
  Gen g(6);
  auto batch = random_batch(g, net.config(), 9, 1);
  batch.push_back(batch[0]);
  batch.push_back(batch[0]);
  const auto cache = net.forward(batch, false);
  EXPECT_EQ(cache.probabilities(0), cache.probabilities(1));
  EXPECT_EQ(cache.probabilities(0), cache.probabilities(2));
}

TEST(Network, InferenceIsIndependentOfBatchCompanions) {
  const auto net = tiny_network(7);
  Gen g(8);
  const auto batch = random_batch(g, net.config(), 9, 4);
  const auto together = net.forward(batch, false).probabilities;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto alone = net.forward(TokenBatch{batch[b]}, false).probabilities;
    EXPECT_EQ(alone(0), together(static_cast<Eigen::Index>(b)));
  }
}

TEST(Network, ProbabilitiesStrictlyInsideUnitInterval) {
  auto net = tiny_network(9);
  net.params().dense2_bias(0, 0) = 80.0;
  Gen g(10);
  const auto high = net.forward(random_batch(g, net.config(), 9, 3), false).probabilities;
  net.params().dense2_bias(0, 0) = -80.0;
  const auto low = net.forward(random_batch(g, net.config(), 9, 3), false).probabilities;
  for (Eigen::Index b = 0; b < 3; ++b) {
    EXPECT_LT(high(b), 1.0);
    EXPECT_GT(low(b), 0.0);
  }
}

TEST(Network, DropoutMasksFollowTheSeed) {
  const auto net = tiny_network(12);
  Gen g(13);
  const auto batch = random_batch(g, net.config(), 9, 4);
  const auto a = net.forward(batch, true, 1).probabilities;
  EXPECT_EQ(a, net.forward(batch, true, 1).probabilities);
  EXPECT_NE(a, net.forward(batch, true, 2).probabilities);
}

TEST(BatchNorm, TrainingStatisticsNormalize) {
  auto net = tiny_network(14);
  Gen g(15);
  const auto cache = net.forward(random_batch(g, net.config(), 9, 6), true, 3);
  const auto F = static_cast<Eigen::Index>(net.config().conv_filters);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(F);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(F);
  double n = 0;
  for (const auto& x : cache.normalized) {
    sum += x.rowwise().sum();
    sq += x.array().square().matrix().rowwise().sum();
    n += static_cast<double>(x.cols());
  }
  for (Eigen::Index f = 0; f < F; ++f) {
    EXPECT_NEAR(sum(f) / n, 0.0, 1e-12);
    const double var = cache.batch_variance(f);
    EXPECT_NEAR(sq(f) / n, var / (var + net.config().bn_epsilon), 1e-9);
  }
}

TEST(BatchNorm, RunningStatisticsMovingAverage) {
  auto net = tiny_network(16);
  Gen g(17);
  const auto cache = net.forward(random_batch(g, net.config(), 9, 4), true, 5);
  const auto before = net.running();
  net.update_running_stats(cache);
  const double m = net.config().bn_momentum;
  for (Eigen::Index f = 0; f < before.mean.rows(); ++f) {
    EXPECT_DOUBLE_EQ(net.running().mean(f, 0), m * before.mean(f, 0) + (1 - m) * cache.batch_mean(f));
    EXPECT_DOUBLE_EQ(net.running().variance(f, 0), m * before.variance(f, 0) + (1 - m) * cache.batch_variance(f));
  }
}

TEST(ShapeValidation, NamesTheOffendingTensor) {
  auto net = tiny_network(18);
  EXPECT_NO_THROW(net.validate_shapes());
  net.params().lstm2_bwd.recurrent_weights.resize(3, 3);
  try {
    net.validate_shapes();
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.layer(), "lstm2.bwd.recurrent_weights");
  }
}

TEST(ShapeValidation, RejectsBadBatches) {
  const auto net = tiny_network(19);
  EXPECT_THROW(net.forward(TokenBatch{std::vector<int>(net.config().max_seq_len + 1, 0)}, false), ShapeError);
  EXPECT_THROW(net.forward(TokenBatch{std::vector<int>(net.config().max_seq_len, 99)}, false), ShapeError);
}

TEST(Config, JsonRoundTripAndValidation) {
  ModelConfig c = tiny_config();
  c.learning_rate = 0.01;
  EXPECT_EQ(config_from_json(to_json(c), ModelConfig{}), c);
  EXPECT_THROW(config_from_json(nlohmann::json{{"embed_dimension", 3}}, ModelConfig{}), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json{{"dropout_rate", 1.5}}, ModelConfig{}), std::invalid_argument);
  ModelConfig short_seq = tiny_config();
  short_seq.max_seq_len = short_seq.min_seq_len() - 1;
  EXPECT_THROW(short_seq.validate(), std::invalid_argument);
}

TEST(Gradients, FirstOrderTaylorAgreement) {
  auto net = tiny_network(20);
  Gen g(21);
  const auto batch = random_batch(g, net.config(), 9, 2);
  const std::vector<double> y = {1.0, 0.0};
  const auto grads = net.backward(net.forward(batch, true, 4), y);
  Parameters direction = net.params().zeros_like();
  std::normal_distribution<double> normal;
  direction.for_each([&](std::string_view, Eigen::MatrixXd& m) { m = m.unaryExpr([&](double) { return normal(g); }); });
  double slope = 0;
  std::vector<const Eigen::MatrixXd*> d;
  direction.for_each([&](std::string_view, const Eigen::MatrixXd& m) { d.push_back(&m); });
  std::size_t k = 0;
  grads.for_each([&](std::string_view, const Eigen::MatrixXd& m) { slope += (m.array() * d[k++]->array()).sum(); });

  const double base = Network::loss(net.forward(batch, true, 4), y);
  auto remainder = [&](double eps) {
    Network moved = net;
    std::size_t j = 0;
    moved.params().for_each([&](std::string_view, Eigen::MatrixXd& m) { m += eps * *d[j++]; });
    return std::abs(Network::loss(moved.forward(batch, true, 4), y) - base - eps * slope);
  };
  // Small enough that no ReLU or max-pool switch is crossed.
  const double r1 = remainder(1e-4);
  const double r2 = remainder(5e-5);
  // Quadratic remainder: halving epsilon divides it by about four.
  EXPECT_GT(r1 / r2, 3.0);
  EXPECT_LT(r1 / r2, 5.0);
}

TEST(Gradients, TinyConfigFiniteDifferenceCheck) {
  for (std::uint64_t seed : {42, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) {
    const auto result = gradient_check_detail(tiny_config(), seed);
    EXPECT_LT(result.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_EQ(result.per_tensor.size(), 21u);
    EXPECT_GT(result.coordinates, 300u);
  }
}

TEST(Gradients, CoarserStepConvergesForEverySeed) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    worst = std::max(worst, gradient_check_detail(tiny_config(), seed, 1e-4).max_relative_error);
  }
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
