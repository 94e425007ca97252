#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lercause/corpus.hpp"
#include "lercause/textprep.hpp"

namespace lercause::patterns {

class PatternError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// effect_cause ("E-C"): effect on the left of the phrase, cause on the right.
/// cause_effect ("C-E"): the opposite.
enum class Direction { effect_cause, cause_effect };

std::string_view to_string(Direction direction);  // "EC" / "CE"

struct CausalPattern {
  std::string phrase;  // lowercase, single-spaced, no edge whitespace
  Direction direction = Direction::effect_cause;

  friend bool operator==(const CausalPattern&, const CausalPattern&) = default;
};

/// Byte offsets [start, end) into the matched text.
struct PatternMatch {
  CausalPattern pattern;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct CauseEffectPair {
  std::string cause;
  std::string effect;
  std::string pattern;
  std::string source_id;

  friend bool operator==(const CauseEffectPair&, const CauseEffectPair&) = default;
};

/// The built-in 39-phrase table: 26 E-C and 13 C-E connectives.
std::vector<CausalPattern> default_patterns();

/// Reads `<EC|CE><TAB><phrase>` lines; '#' lines and blank lines are skipped.
std::vector<CausalPattern> read_patterns(std::istream& in);
std::vector<CausalPattern> read_patterns_file(const std::string& path);
void write_patterns(std::ostream& out, const std::vector<CausalPattern>& patterns);

/// Compiled pattern table. Matching is ASCII case-insensitive; an occurrence
/// must be delimited by non-alphanumeric characters or the text edges.
class PatternMatcher {
 public:
  explicit PatternMatcher(std::vector<CausalPattern> patterns = default_patterns());

  /// Left-to-right scan; the longest phrase wins at each position and accepted
  /// matches consume their span.
  std::vector<PatternMatch> find(const textprep::CleanText& text) const;

  std::vector<CauseEffectPair> extract(const textprep::CleanText& text, std::string_view source_id = {}) const;

  const std::vector<CausalPattern>& patterns() const noexcept { return patterns_; }

 private:
  std::vector<CausalPattern> patterns_;  // longest phrase first
};

std::vector<PatternMatch> find_matches(const textprep::CleanText& text, const std::vector<CausalPattern>& patterns);

/// The k+1 raw text segments around k matches, pattern spans removed.
std::vector<std::string_view> segments(const textprep::CleanText& text, const std::vector<PatternMatch>& matches);

/// Pairs each match with its neighbouring segments, clipped to the sentence
/// holding the match. The operand left of the phrase also loses trailing
/// auxiliaries ("was", "also", ...). Pairs with an empty side are dropped.
std::vector<CauseEffectPair> extract_pairs(const textprep::CleanText& text,
                                           const std::vector<CausalPattern>& patterns,
                                           std::string_view source_id = {});

/// Match counts per phrase over all record texts; phrases never matched are absent.
std::map<std::string, std::size_t> pattern_histogram(const std::vector<corpus::CorpusRecord>& records,
                                                     const std::vector<CausalPattern>& patterns = default_patterns());

nlohmann::json to_json(const CauseEffectPair& pair);
CauseEffectPair pair_from_json(const nlohmann::json& object);

}  // namespace lercause::patterns
