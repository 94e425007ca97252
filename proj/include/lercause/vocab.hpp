#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lercause::classifier {

/// Lowercased tokens split on ASCII whitespace and punctuation; punctuation is dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Token ids are dense: 0 is padding, 1 is out-of-vocabulary, tokens start at 2.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;

  Vocabulary() = default;
  /// `tokens[k]` receives id k + 2. Throws std::invalid_argument on duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size() + 2; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens with frequency >= min_freq, most frequent first, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t min_freq = 1);

/// First `max_len` token ids, right-padded with kPadId.
std::vector<int> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

}  // namespace lercause::classifier
