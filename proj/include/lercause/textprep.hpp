#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lercause::textprep {

/// Text that has passed through clean_text(): no newlines, tabs, other C0
/// control characters or U+FFFD, single spaces only, no edge whitespace.
class CleanText {
 public:
  CleanText() = default;

  const std::string& str() const noexcept { return value_; }
  std::string_view view() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend bool operator==(const CleanText&, const CleanText&) = default;

 private:
  explicit CleanText(std::string value) : value_(std::move(value)) {}
  friend CleanText clean_text(std::string_view raw);

  std::string value_;
};

/// Normalizes raw report text. Newlines and other control characters, U+FFFD
/// and literal `\uXXXX` escape sequences become spaces; whitespace runs
/// collapse to one space; the result is trimmed. Idempotent.
CleanText clean_text(std::string_view raw);

/// True when `text` already satisfies the CleanText invariants.
bool is_clean(std::string_view text);

const std::vector<std::string>& default_abbreviations();

/// Byte spans [begin, end) of each sentence in `cleaned`, in order. Spans
/// exclude the single separating space.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    const CleanText& cleaned, const std::vector<std::string>& abbreviations = default_abbreviations());

/// Splits after '.', '!' or '?' when the next token starts with an uppercase
/// letter or digit, unless the token ending at the terminator is a listed
/// abbreviation (compared case-insensitively).
std::vector<std::string> split_sentences(
    const CleanText& cleaned, const std::vector<std::string>& abbreviations = default_abbreviations());

struct SentenceWindow {
  std::vector<std::string> sentences;
  std::string text;
  std::string doc_id;
  std::size_t start_index = 0;

  std::size_t width() const noexcept { return sentences.size(); }
};

inline constexpr int kDefaultWidths[] = {1, 2, 3};

/// Sliding windows of each requested width over consecutive sentences,
/// stride 1. Windows whose text repeats an earlier window are dropped.
/// Throws std::invalid_argument for widths outside {1,2,3}.
std::vector<SentenceWindow> build_windows(const std::vector<std::string>& sentences,
                                          std::string_view doc_id,
                                          std::span<const int> widths = kDefaultWidths);

}  // namespace lercause::textprep
