#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace lercause::corpus {

/// Raised for malformed corpus/document data and violated record invariants.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label { causal, non_causal };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

enum class Field { abstract, event_description, cause_description };

std::string_view to_string(Field field);
Field parse_field(std::string_view text);

inline constexpr std::string_view kNA = "NA";

/// One licensee event report. Only the three narrative fields feed the corpus;
/// the remaining nine are carried as metadata.
struct LerDocument {
  std::string doc_id;
  std::string facility_name;
  std::string title;
  std::string event_date;
  std::string report_date;
  std::string cause;
  std::string system;
  std::string component;
  std::string manufacturer;
  std::string iris_reportability;
  std::string abstract;
  std::string event_description;
  std::string cause_description;

  const std::string& narrative(Field field) const;
};

struct CorpusRecord {
  std::string id;
  std::string text;
  Label label = Label::non_causal;
  std::string cause{kNA};
  std::string effect{kNA};
  std::string doc_id;
  Field field = Field::abstract;

  bool has_pair() const { return cause != kNA && effect != kNA; }

  /// Throws CorpusError if the label/NA coupling or text cleanliness is broken.
  void validate() const;

  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
};

/// Stable identifier for a window: FNV-1a over (doc_id, field, start, width).
std::string record_id(std::string_view doc_id, Field field, std::size_t start_index, std::size_t width);

std::vector<CorpusRecord> ingest(const LerDocument& doc);

/// Deterministic shuffle, then round(train_fraction * n) records (at least
/// one) go to train and the rest to test.
std::pair<std::vector<CorpusRecord>, std::vector<CorpusRecord>> split_train_test(
    const std::vector<CorpusRecord>& records, const SplitSpec& spec);

/// Oversamples the minority class with replacement until both classes have
/// equal counts, then shuffles. Throws CorpusError on single-class input.
std::vector<CorpusRecord> resample_balance(const std::vector<CorpusRecord>& records, std::uint64_t seed);

// Line-delimited JSON formats.

nlohmann::json to_json(const CorpusRecord& record);
CorpusRecord record_from_json(const nlohmann::json& object);

nlohmann::json to_json(const LerDocument& doc);
/// `ordinal` names documents that carry no `doc_id` key.
LerDocument document_from_json(const nlohmann::json& object, std::size_t ordinal);

std::vector<CorpusRecord> read_corpus(std::istream& in);
std::vector<CorpusRecord> read_corpus_file(const std::string& path);
void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records);
void write_corpus_file(const std::string& path, const std::vector<CorpusRecord>& records);

std::vector<LerDocument> read_documents(std::istream& in);
std::vector<LerDocument> read_documents_file(const std::string& path);

/// Parses each nonblank line of `in` as a JSON object. Throws CorpusError
/// naming the offending line.
std::vector<nlohmann::json> read_json_lines(std::istream& in);

}  // namespace lercause::corpus
