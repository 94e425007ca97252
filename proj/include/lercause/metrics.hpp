#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lercause/corpus.hpp"
#include "lercause/patterns.hpp"

namespace lercause::metrics {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

/// Causal is the positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct EvalReport {
  std::map<std::string, ClassMetrics> per_class;  // keyed "causal" / "non_causal"
  double accuracy = 0.0;
  Confusion confusion;
};

/// Throws std::invalid_argument when the lengths differ or the input is empty.
EvalReport evaluate(std::span<const corpus::Label> predicted, std::span<const corpus::Label> gold);

/// Derives the report from confusion counts; zero denominators give 0.
EvalReport report_from_confusion(const Confusion& confusion);

struct ExtractionScore {
  std::size_t correct = 0;
  std::size_t total_gold = 0;
  double fraction = 0.0;
};

/// Lowercase, trim, collapse internal whitespace.
std::string normalize_pair_text(std::string_view text);

/// Greedy one-to-one matching in gold order on normalized (cause, effect).
/// Throws std::invalid_argument for an empty gold list.
ExtractionScore score_extraction(const std::vector<patterns::CauseEffectPair>& predicted,
                                 const std::vector<patterns::CauseEffectPair>& gold);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const ExtractionScore& score);

/// Human-readable table with three decimals.
std::string render(const EvalReport& report);
std::string render(const ExtractionScore& score);

}  // namespace lercause::metrics
