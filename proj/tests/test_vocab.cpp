#include <gtest/gtest.h>

#include <map>

#include "lercause/vocab.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace lercause::classifier;
using lercause::testing::Gen;

TEST(Tokenize, LowercasesAndDropsPunctuation) {
  EXPECT_EQ(tokenize("The Pump, (A) tripped!"), (std::vector<std::string>{"the", "pump", "a", "tripped"}));
  EXPECT_EQ(tokenize("DB-50 at 4.5 gpm"), (std::vector<std::string>{"db", "50", "at", "4", "5", "gpm"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" ... ").empty());
}

TEST(BuildVocab, FrequencyOrder) {
  const auto v = build_vocab({"a b", "a"});
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), 3);
}

TEST(BuildVocab, SingleText) {
  const auto v = build_vocab({"x"});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("x"), 2);
}

TEST(BuildVocab, MinFrequencyDropsRareTokens) {
  const auto v = build_vocab({"a b", "a"}, 2);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), Vocabulary::kOovId);
}

TEST(BuildVocab, MatchesFrequencyOracle) {
  const std::vector<std::string> words = {"pump", "valve", "trip", "due", "to", "heat", "relay", "fuse"};
  Gen g(31);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> texts;
    std::map<std::string, std::size_t> freq;
    for (std::size_t t = lercause::testing::uniform(g, 1, 8); t > 0; --t) {
      std::string text;
      for (std::size_t k = lercause::testing::uniform(g, 0, 6); k > 0; --k) {
        const auto& w = lercause::testing::pick(g, words);
        ++freq[w];
        text += w + " ";
      }
      texts.push_back(text);
    }
    const std::size_t min_freq = lercause::testing::uniform(g, 1, 3);
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [w, n] : freq) {
      if (n >= min_freq) kept.emplace_back(w, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    const auto v = build_vocab(texts, min_freq);
    ASSERT_EQ(v.size(), kept.size() + 2);
    for (std::size_t k = 0; k < kept.size(); ++k) ASSERT_EQ(v.id(kept[k].first), static_cast<int>(k) + 2);
  }
}

TEST(Encode, PadsTruncatesAndMapsUnknown) {
  const Vocabulary v({"a", "b"});
  EXPECT_EQ(encode("a b", v, 4), (std::vector<int>{2, 3, 0, 0}));
  EXPECT_EQ(encode("a b c d e", v, 3), (std::vector<int>{2, 3, 1}));
  EXPECT_EQ(encode("", v, 3), (std::vector<int>{0, 0, 0}));
}

TEST(Vocabulary, RejectsDuplicates) { EXPECT_THROW(Vocabulary({"a", "a"}), std::invalid_argument); }

}  // namespace
