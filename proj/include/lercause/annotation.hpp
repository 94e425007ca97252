#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lercause/corpus.hpp"

namespace lercause::annotation {

/// Code point offsets [start, end) into a record's cleaned text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

struct Annotation {
  std::string record_id;
  corpus::Label label = corpus::Label::non_causal;
  std::optional<Span> cause_span;
  std::optional<Span> effect_span;
  std::string annotator;
  std::string timestamp;  // ISO-8601

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

using FieldErrors = std::map<std::string, std::string>;

/// Annotation rejected; `fields` maps each offending field to a diagnostic.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(FieldErrors fields);
  const FieldErrors& fields() const noexcept { return fields_; }

 private:
  FieldErrors fields_;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const Annotation& a);

/// Parses a request body or log line. Throws ValidationError on malformed fields.
/// A body without "timestamp" gets the current UTC time.
Annotation annotation_from_json(const nlohmann::json& object, const std::string& record_id);

/// Empty when `a` satisfies the label/span invariants against `text`.
FieldErrors validate(const Annotation& a, const std::string& text);

/// Record with label, cause and effect derived from `a` (spans cut from the text).
corpus::CorpusRecord apply(corpus::CorpusRecord record, const Annotation& a);

std::string utc_timestamp_now();

struct RecordFilter {
  std::optional<corpus::Label> label;
  std::optional<bool> annotated;
  std::optional<std::string> doc_id;
};

struct RecordView {
  corpus::CorpusRecord record;
  bool annotated = false;
  std::optional<Annotation> latest;
};

struct Page {
  std::vector<RecordView> records;
  std::size_t page = 1;  // 1-based
  std::size_t page_size = 0;
  std::size_t total = 0;  // records matching the filter
};

struct Stats {
  std::size_t total = 0;
  std::size_t annotated = 0;
  std::size_t causal = 0;
  std::size_t non_causal = 0;
};

nlohmann::json to_json(const RecordView& view);
nlohmann::json to_json(const Page& page);
nlohmann::json to_json(const Stats& stats);

/// `<corpus>.annotations.jsonl`
std::string default_log_path(const std::string& corpus_path);

/// Corpus plus an append-only annotation log. State is the loaded corpus with
/// the latest annotation per record applied; every accepted annotation is
/// appended and fsync'd before submit() returns. Reads may run concurrently;
/// writes are serialized.
class AnnotationStore {
 public:
  AnnotationStore(const std::string& corpus_path, std::string log_path);
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Ordered by record id; filters are conjunctive; an out-of-range page is empty.
  Page list(const RecordFilter& filter, std::size_t page, std::size_t page_size) const;
  std::optional<RecordView> get(const std::string& id) const;

  /// Throws NotFound for an unknown record and ValidationError on invariant violations.
  corpus::CorpusRecord submit(const Annotation& a);

  /// Merged corpus in the original file order, in the corpus file format.
  std::string export_corpus() const;
  std::vector<corpus::CorpusRecord> records() const;
  Stats stats() const;
  std::size_t log_entries() const;

  const std::string& log_path() const noexcept { return log_path_; }

 private:
  void replay();
  void apply_locked(const Annotation& a);

  std::string log_path_;
  int log_fd_ = -1;
  mutable std::shared_mutex mutex_;
  std::vector<std::string> file_order_;
  std::map<std::string, corpus::CorpusRecord> base_;
  std::map<std::string, corpus::CorpusRecord> current_;
  std::map<std::string, Annotation> latest_;
  std::size_t log_entries_ = 0;
};

}  // namespace lercause::annotation
