#include "lercause/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#include "lercause/utf8.hpp"

namespace lercause::annotation {

using corpus::CorpusRecord;
using corpus::Label;
using nlohmann::json;

namespace {

std::string describe(const FieldErrors& fields) {
  std::string out = "invalid annotation:";
  for (const auto& [field, message] : fields) out += " " + field + " (" + message + ")";
  return out;
}

json span_json(const std::optional<Span>& span) {
  if (!span) return std::string(corpus::kNA);
  return json::array({span->start, span->end});
}

std::optional<Span> parse_span(const json& object, const char* key, FieldErrors& errors) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null() || (it->is_string() && it->get<std::string>() == corpus::kNA)) {
    return std::nullopt;
  }
  if (it->is_array() && it->size() == 2 && (*it)[0].is_number_integer() && (*it)[1].is_number_integer()) {
    if ((*it)[0].get<std::int64_t>() >= 0 && (*it)[1].get<std::int64_t>() >= 0) {
      return Span{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
    }
    errors[key] = "offsets must be non-negative";
  } else {
    errors[key] = "expected [start, end] or \"NA\"";
  }
  return std::nullopt;
}

bool valid_timestamp(const std::string& ts) {
  static const std::regex pattern(R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$)");
  return std::regex_match(ts, pattern);
}

}  // namespace

ValidationError::ValidationError(FieldErrors fields)
    : std::runtime_error(describe(fields)), fields_(std::move(fields)) {}

json to_json(const Annotation& a) {
  return json{{"record_id", a.record_id},
              {"label", corpus::to_string(a.label)},
              {"cause_span", span_json(a.cause_span)},
              {"effect_span", span_json(a.effect_span)},
              {"annotator", a.annotator},
              {"timestamp", a.timestamp}};
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Annotation annotation_from_json(const json& object, const std::string& record_id) {
  if (!object.is_object()) throw ValidationError(FieldErrors{{"body", "expected a JSON object"}});
  FieldErrors errors;
  Annotation a;
  a.record_id = record_id;
  if (const auto it = object.find("record_id"); it != object.end()) {
    if (!it->is_string() || it->get<std::string>() != record_id) {
      errors["record_id"] = "does not match the addressed record";
    }
  }
  if (const auto it = object.find("label"); it == object.end() || !it->is_string()) {
    errors["label"] = "required: \"causal\" or \"non_causal\"";
  } else {
    try {
      a.label = corpus::parse_label(it->get<std::string>());
    } catch (const corpus::CorpusError&) {
      errors["label"] = "must be \"causal\" or \"non_causal\"";
    }
  }
  a.cause_span = parse_span(object, "cause_span", errors);
  a.effect_span = parse_span(object, "effect_span", errors);
  if (const auto it = object.find("annotator"); it == object.end() || !it->is_string()) {
    errors["annotator"] = "required string";
  } else {
    a.annotator = it->get<std::string>();
  }
  if (const auto it = object.find("timestamp"); it == object.end() || it->is_null()) {
    a.timestamp = utc_timestamp_now();
  } else if (!it->is_string() || !valid_timestamp(it->get<std::string>())) {
    errors["timestamp"] = "expected ISO-8601 such as 2024-01-31T12:00:00Z";
  } else {
    a.timestamp = it->get<std::string>();
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return a;
}

FieldErrors validate(const Annotation& a, const std::string& text) {
  FieldErrors errors;
  if (a.annotator.empty()) errors["annotator"] = "must not be empty";
  if (a.label == Label::non_causal) {
    if (a.cause_span) errors["cause_span"] = "must be NA for a non_causal label";
    if (a.effect_span) errors["effect_span"] = "must be NA for a non_causal label";
    return errors;
  }
  const std::size_t length = utf8::length(text);
  auto check = [&](const std::optional<Span>& span, const char* key) {
    if (!span) {
      errors[key] = "required for a causal label";
    } else if (span->start >= span->end) {
      errors[key] = "start must be less than end";
    } else if (span->end > length) {
      errors[key] = "exceeds text length " + std::to_string(length);
    }
  };
  check(a.cause_span, "cause_span");
  check(a.effect_span, "effect_span");
  if (!errors.contains("cause_span") && !errors.contains("effect_span")) {
    const Span& c = *a.cause_span;
    const Span& e = *a.effect_span;
    if (c.start < e.end && e.start < c.end) errors["effect_span"] = "overlaps cause_span";
  }
  return errors;
}

CorpusRecord apply(CorpusRecord record, const Annotation& a) {
  record.label = a.label;
  if (a.label == Label::causal) {
    record.cause = utf8::substr(record.text, a.cause_span->start, a.cause_span->end);
    record.effect = utf8::substr(record.text, a.effect_span->start, a.effect_span->end);
  } else {
    record.cause = std::string(corpus::kNA);
    record.effect = std::string(corpus::kNA);
  }
  return record;
}

json to_json(const RecordView& view) {
  json out = corpus::to_json(view.record);
  out["annotated"] = view.annotated;
  out["annotation"] = view.latest ? to_json(*view.latest) : json(nullptr);
  return out;
}

json to_json(const Page& page) {
  json records = json::array();
  for (const auto& r : page.records) records.push_back(to_json(r));
  const std::size_t pages = page.page_size == 0 ? 0 : (page.total + page.page_size - 1) / page.page_size;
  return json{{"page", page.page},   {"page_size", page.page_size}, {"total", page.total},
              {"pages", pages},      {"records", records}};
}

json to_json(const Stats& stats) {
  return json{{"total", stats.total},
              {"annotated", stats.annotated},
              {"remaining", stats.total - stats.annotated},
              {"by_label", {{"causal", stats.causal}, {"non_causal", stats.non_causal}}}};
}

std::string default_log_path(const std::string& corpus_path) { return corpus_path + ".annotations.jsonl"; }

AnnotationStore::AnnotationStore(const std::string& corpus_path, std::string log_path)
    : log_path_(std::move(log_path)) {
  for (auto& record : corpus::read_corpus_file(corpus_path)) {
    if (base_.contains(record.id)) throw corpus::CorpusError("duplicate record id " + record.id);
    file_order_.push_back(record.id);
    base_.emplace(record.id, record);
    current_.emplace(record.id, std::move(record));
  }
  replay();
  log_fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw std::runtime_error("cannot open annotation log " + log_path_ + ": " + std::strerror(errno));
}

AnnotationStore::~AnnotationStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void AnnotationStore::replay() {
  std::ifstream in(log_path_, std::ios::binary);
  if (!in) return;
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = content.substr(pos, complete ? nl - pos : std::string::npos);
    pos = complete ? nl + 1 : content.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json object = json::parse(line);
      const auto id = object.at("record_id").get<std::string>();
      const Annotation a = annotation_from_json(object, id);
      const auto it = base_.find(id);
      if (it == base_.end()) throw NotFound("annotation log names unknown record " + id);
      if (auto errors = validate(a, it->second.text); !errors.empty()) throw ValidationError(std::move(errors));
      apply_locked(a);
      ++log_entries_;
    } catch (const std::exception& e) {
      // A crash mid-append can leave one unterminated final line; it was never acknowledged.
      if (!complete) break;
      throw std::runtime_error(log_path_ + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void AnnotationStore::apply_locked(const Annotation& a) {
  current_[a.record_id] = apply(base_.at(a.record_id), a);
  latest_[a.record_id] = a;
}

Page AnnotationStore::list(const RecordFilter& filter, std::size_t page, std::size_t page_size) const {
  std::shared_lock lock(mutex_);
  Page out;
  out.page = page == 0 ? 1 : page;
  out.page_size = page_size;
  const std::size_t first = (out.page - 1) * page_size;
  for (const auto& [id, record] : current_) {
    const bool annotated = latest_.contains(id);
    if (filter.label && record.label != *filter.label) continue;
    if (filter.annotated && annotated != *filter.annotated) continue;
    if (filter.doc_id && record.doc_id != *filter.doc_id) continue;
    if (out.total >= first && out.records.size() < page_size) {
      RecordView view{record, annotated, std::nullopt};
      if (annotated) view.latest = latest_.at(id);
      out.records.push_back(std::move(view));
    }
    ++out.total;
  }
  return out;
}

std::optional<RecordView> AnnotationStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = current_.find(id);
  if (it == current_.end()) return std::nullopt;
  RecordView view{it->second, latest_.contains(id), std::nullopt};
  if (view.annotated) view.latest = latest_.at(id);
  return view;
}

CorpusRecord AnnotationStore::submit(const Annotation& a) {
  std::unique_lock lock(mutex_);
  const auto it = base_.find(a.record_id);
  if (it == base_.end()) throw NotFound("no record with id " + a.record_id);
  if (auto errors = validate(a, it->second.text); !errors.empty()) throw ValidationError(std::move(errors));

  const std::string line = to_json(a).dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(log_fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("annotation log write failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw std::runtime_error("annotation log fsync failed: " + std::string(std::strerror(errno)));

  apply_locked(a);
  ++log_entries_;
  return current_.at(a.record_id);
}

std::vector<CorpusRecord> AnnotationStore::records() const {
  std::shared_lock lock(mutex_);
  std::vector<CorpusRecord> out;
  out.reserve(file_order_.size());
  for (const auto& id : file_order_) out.push_back(current_.at(id));
  return out;
}

std::string AnnotationStore::export_corpus() const {
  std::ostringstream out;
  corpus::write_corpus(out, records());
  return out.str();
}

Stats AnnotationStore::stats() const {
  std::shared_lock lock(mutex_);
  Stats s;
  s.total = current_.size();
  s.annotated = latest_.size();
  for (const auto& [id, record] : current_) (record.label == Label::causal ? s.causal : s.non_causal)++;
  return s;
}

std::size_t AnnotationStore::log_entries() const {
  std::shared_lock lock(mutex_);
  return log_entries_;
}

}  // namespace lercause::annotation
