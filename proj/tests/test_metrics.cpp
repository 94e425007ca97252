#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "lercause/metrics.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace lercause;
using corpus::Label;
using lercause::testing::Gen;

constexpr Label C = Label::causal;
constexpr Label N = Label::non_causal;

struct Counts {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count(const std::vector<Label>& p, const std::vector<Label>& g) {
  Counts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == C && g[i] == C) c.tp += 1;
    if (p[i] == C && g[i] == N) c.fp += 1;
    if (p[i] == N && g[i] == C) c.fn += 1;
    if (p[i] == N && g[i] == N) c.tn += 1;
  }
  return c;
}

double ratio(double a, double b) { return b == 0 ? 0.0 : a / b; }

TEST(Evaluate, PerfectPredictions) {
  const std::vector<Label> gold = {C, N, N, C, N};
  const auto r = metrics::evaluate(gold, gold);
  for (const auto& [name, m] : r.per_class) {
    EXPECT_EQ(m.precision, 1.0) << name;
    EXPECT_EQ(m.recall, 1.0) << name;
    EXPECT_EQ(m.f1, 1.0) << name;
  }
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Evaluate, ConstructedConfusion) {
  std::vector<Label> gold(11, C);
  std::vector<Label> pred(11, C);
  pred[10] = N;                           // fn = 1
  gold.insert(gold.end(), {N, N, N, N});  // two false positives, two true negatives
  pred.insert(pred.end(), {C, C, N, N});
  const auto r = metrics::evaluate(pred, gold);
  EXPECT_EQ(r.confusion, (metrics::Confusion{10, 2, 1, 2}));
  EXPECT_DOUBLE_EQ(r.per_class.at("causal").precision, 10.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.per_class.at("causal").recall, 10.0 / 11.0);
  EXPECT_EQ(r.per_class.at("causal").support, 11u);
  EXPECT_EQ(r.per_class.at("non_causal").support, 4u);
}

TEST(Evaluate, ImbalancedSupportsFormulas) {
  // Supports 3981 / 45 with counts giving causal precision 0.77 and recall 0.91.
  metrics::Confusion c{41, 12, 4, 3969};
  const auto r = metrics::report_from_confusion(c);
  EXPECT_NEAR(r.per_class.at("causal").precision, 0.77, 0.005);
  EXPECT_NEAR(r.per_class.at("causal").recall, 0.91, 0.005);
  EXPECT_NEAR(r.per_class.at("causal").f1, 0.84, 0.005);
  EXPECT_NEAR(r.accuracy, 0.996, 0.0005);
  EXPECT_EQ(r.per_class.at("causal").support + r.per_class.at("non_causal").support, 4026u);
}

TEST(Evaluate, ZeroDenominatorsAreZero) {
  const auto r = metrics::evaluate(std::vector<Label>{N, N}, std::vector<Label>{N, N});
  EXPECT_EQ(r.per_class.at("causal").precision, 0.0);
  EXPECT_EQ(r.per_class.at("causal").recall, 0.0);
  EXPECT_EQ(r.per_class.at("causal").f1, 0.0);
}

TEST(Evaluate, RejectsMismatchedOrEmpty) {
  EXPECT_THROW(metrics::evaluate(std::vector<Label>{C}, std::vector<Label>{C, N}), std::invalid_argument);
  EXPECT_THROW(metrics::evaluate(std::vector<Label>{}, std::vector<Label>{}), std::invalid_argument);
}

TEST(Evaluate, MatchesBruteForceAndIsPermutationInvariant) {
  Gen g(41);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = lercause::testing::uniform(g, 1, 1000);
    const double pc = std::uniform_real_distribution<double>(0, 1)(g);
    std::bernoulli_distribution coin(pc);
    std::vector<Label> p(n), gold(n);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = coin(g) ? C : N;
      gold[k] = coin(g) ? C : N;
    }
    const auto c = count(p, gold);
    const auto r = metrics::evaluate(p, gold);
    ASSERT_EQ(r.confusion.tp, c.tp);
    ASSERT_EQ(r.confusion.fp, c.fp);
    ASSERT_EQ(r.confusion.fn, c.fn);
    ASSERT_EQ(r.confusion.tn, c.tn);
    const double prec = ratio(c.tp, c.tp + c.fp);
    const double rec = ratio(c.tp, c.tp + c.fn);
    ASSERT_EQ(r.per_class.at("causal").precision, prec);
    ASSERT_EQ(r.per_class.at("causal").recall, rec);
    ASSERT_EQ(r.per_class.at("causal").f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);
    ASSERT_EQ(r.per_class.at("non_causal").precision, ratio(c.tn, c.tn + c.fn));
    ASSERT_EQ(r.accuracy, (c.tp + c.tn) / static_cast<double>(n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), g);
    std::vector<Label> p2, g2;
    for (const auto k : order) {
      p2.push_back(p[k]);
      g2.push_back(gold[k]);
    }
    ASSERT_EQ(metrics::evaluate(p2, g2).confusion, r.confusion);
  }
}

std::vector<patterns::CauseEffectPair> golden_pairs() {
  return {{"inertial latch binding", "the db-50 supply breaker to auxiliary feedwater pump 21 did not close", "", ""},
          {"The foam ring had deteriorated",
           "a piece of the foam to tear loose and be drawn into the suction piping of the \"A\" MDAFW pump", "", ""},
          {"insufficient tolerance in the motor shaft endplay, as set during refurbishment", "the bearing degradation",
           "", ""},
          {"The loose shorting screws", "The intermittent poor electrical connection", "", ""}};
}

TEST(ScoreExtraction, Reflexive) {
  const auto s = metrics::score_extraction(golden_pairs(), golden_pairs());
  EXPECT_EQ(s.correct, 4u);
  EXPECT_EQ(s.total_gold, 4u);
  EXPECT_EQ(s.fraction, 1.0);
}

TEST(ScoreExtraction, SwappedTupleIsWrong) {
  auto predicted = golden_pairs();
  std::swap(predicted[2].cause, predicted[2].effect);
  EXPECT_EQ(metrics::score_extraction(predicted, golden_pairs()).correct, 3u);
}

TEST(ScoreExtraction, NormalizationAndInjectivity) {
  const std::vector<patterns::CauseEffectPair> gold = {{"Heat", "Trip", "", ""}, {"heat", "trip", "", ""}};
  const std::vector<patterns::CauseEffectPair> one = {{"  HEAT ", "trip\t", "", ""}};
  EXPECT_EQ(metrics::score_extraction(one, gold).correct, 1u);
  EXPECT_EQ(metrics::score_extraction(gold, gold).correct, 2u);
  EXPECT_THROW(metrics::score_extraction(one, {}), std::invalid_argument);
  EXPECT_EQ(metrics::normalize_pair_text("  A \t  b  "), "a b");
}

TEST(ScoreExtraction, FractionArithmetic) {
  std::vector<patterns::CauseEffectPair> gold;
  std::vector<patterns::CauseEffectPair> predicted;
  for (int i = 0; i < 252; ++i) {
    gold.push_back({"c" + std::to_string(i), "e" + std::to_string(i), "", ""});
    if (i < 181) predicted.push_back(gold.back());
  }
  EXPECT_NEAR(metrics::score_extraction(predicted, gold).fraction, 0.718, 0.0005);
}

TEST(Render, ThreeDecimals) {
  const auto text = metrics::render(metrics::report_from_confusion({10, 2, 1, 2}));
  EXPECT_NE(text.find("0.833"), std::string::npos) << text;
  EXPECT_NE(text.find("0.909"), std::string::npos) << text;
  const auto j = metrics::to_json(metrics::report_from_confusion({10, 2, 1, 2}));
  EXPECT_EQ(j.at("confusion").at("tp"), 10);
  EXPECT_TRUE(j.at("per_class").contains("non_causal"));
}

}  // namespace
