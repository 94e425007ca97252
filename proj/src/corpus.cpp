#include "lercause/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "lercause/random.hpp"
#include "lercause/textprep.hpp"

namespace lercause::corpus {

using nlohmann::json;

std::string_view to_string(Label label) {
  return label == Label::causal ? "causal" : "non_causal";
}

Label parse_label(std::string_view text) {
  if (text == "causal") return Label::causal;
  if (text == "non_causal") return Label::non_causal;
  throw CorpusError("unknown label '" + std::string(text) + "'");
}

std::string_view to_string(Field field) {
  switch (field) {
    case Field::abstract:
      return "abstract";
    case Field::event_description:
      return "event_description";
    case Field::cause_description:
      return "cause_description";
  }
  return "abstract";
}

Field parse_field(std::string_view text) {
  if (text == "abstract") return Field::abstract;
  if (text == "event_description") return Field::event_description;
  if (text == "cause_description") return Field::cause_description;
  throw CorpusError("unknown field '" + std::string(text) + "'");
}

const std::string& LerDocument::narrative(Field field) const {
  switch (field) {
    case Field::abstract:
      return abstract;
    case Field::event_description:
      return event_description;
    case Field::cause_description:
      return cause_description;
  }
  return abstract;
}

void CorpusRecord::validate() const {
  if (!textprep::is_clean(text)) throw CorpusError("record " + id + ": text is not clean");
  const bool cause_na = cause == kNA;
  const bool effect_na = effect == kNA;
  if (label == Label::non_causal && !(cause_na && effect_na)) {
    throw CorpusError("record " + id + ": non_causal record must have cause and effect NA");
  }
  if (label == Label::causal && cause_na != effect_na) {
    throw CorpusError("record " + id + ": causal record needs both cause and effect, or neither");
  }
  if (label == Label::causal && !cause_na && (cause.empty() || effect.empty())) {
    throw CorpusError("record " + id + ": empty cause or effect");
  }
}

std::string record_id(std::string_view doc_id, Field field, std::size_t start_index, std::size_t width) {
  std::uint64_t hash = 14695981039346656037ULL;
  auto mix = [&](std::string_view part) {
    for (const char c : part) {
      hash ^= static_cast<unsigned char>(c);
      hash *= 1099511628211ULL;
    }
    hash ^= 0x1F;
    hash *= 1099511628211ULL;
  };
  mix(doc_id);
  mix(to_string(field));
  mix(std::to_string(start_index));
  mix(std::to_string(width));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::vector<CorpusRecord> ingest(const LerDocument& doc) {
  std::vector<CorpusRecord> records;
  for (const Field field : {Field::abstract, Field::event_description, Field::cause_description}) {
    const auto cleaned = textprep::clean_text(doc.narrative(field));
    if (cleaned.empty()) continue;
    const auto sentences = textprep::split_sentences(cleaned);
    for (auto& window : textprep::build_windows(sentences, doc.doc_id)) {
      CorpusRecord record;
      record.id = record_id(doc.doc_id, field, window.start_index, window.width());
      record.text = std::move(window.text);
      record.doc_id = doc.doc_id;
      record.field = field;
      records.push_back(std::move(record));
    }
  }
  return records;
}

std::pair<std::vector<CorpusRecord>, std::vector<CorpusRecord>> split_train_test(
    const std::vector<CorpusRecord>& records, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
  }
  if (records.empty()) throw std::invalid_argument("cannot split an empty corpus");
  std::vector<CorpusRecord> shuffled = records;
  Rng rng(spec.seed);
  shuffle_in_place(shuffled, rng);
  const auto n = shuffled.size();
  auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n) + 0.5));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  std::vector<CorpusRecord> train(std::make_move_iterator(shuffled.begin()),
                                  std::make_move_iterator(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train)));
  std::vector<CorpusRecord> test(std::make_move_iterator(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train)),
                                 std::make_move_iterator(shuffled.end()));
  return {std::move(train), std::move(test)};
}

std::vector<CorpusRecord> resample_balance(const std::vector<CorpusRecord>& records, std::uint64_t seed) {
  std::vector<std::size_t> causal;
  std::vector<std::size_t> non_causal;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].label == Label::causal ? causal : non_causal).push_back(i);
  }
  if (causal.empty() || non_causal.empty()) {
    throw CorpusError("corpus cannot be balanced: it contains only one class");
  }
  const auto& minority = causal.size() < non_causal.size() ? causal : non_causal;
  const std::size_t deficit =
      std::max(causal.size(), non_causal.size()) - std::min(causal.size(), non_causal.size());

  Rng rng(seed);
  std::vector<CorpusRecord> out = records;
  out.reserve(records.size() + deficit);
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  for (std::size_t k = 0; k < deficit; ++k) out.push_back(records[minority[pick(rng)]]);
  shuffle_in_place(out, rng);
  return out;
}

json to_json(const CorpusRecord& record) {
  return json{{"id", record.id},         {"text", record.text},     {"label", to_string(record.label)},
              {"cause", record.cause},   {"effect", record.effect}, {"doc_id", record.doc_id},
              {"field", to_string(record.field)}};
}

namespace {

std::string required_string(const json& object, const char* key, const std::string& context) {
  const auto it = object.find(key);
  if (it == object.end() || !it->is_string()) {
    throw CorpusError(context + ": missing or non-string field '" + key + "'");
  }
  return it->get<std::string>();
}

constexpr const char* kDocumentFields[] = {
    "facility_name", "title",     "event_date",         "report_date",
    "cause",         "system",    "component",          "manufacturer",
    "iris_reportability", "abstract", "event_description", "cause_description"};

}  // namespace

CorpusRecord record_from_json(const json& object) {
  if (!object.is_object()) throw CorpusError("corpus record must be a JSON object");
  CorpusRecord record;
  record.id = required_string(object, "id", "corpus record");
  const std::string context = "record " + record.id;
  record.text = required_string(object, "text", context);
  record.label = parse_label(required_string(object, "label", context));
  record.cause = required_string(object, "cause", context);
  record.effect = required_string(object, "effect", context);
  record.doc_id = required_string(object, "doc_id", context);
  record.field = parse_field(required_string(object, "field", context));
  record.validate();
  return record;
}

json to_json(const LerDocument& doc) {
  const std::string* values[] = {&doc.facility_name, &doc.title,        &doc.event_date,
                                 &doc.report_date,   &doc.cause,        &doc.system,
                                 &doc.component,     &doc.manufacturer, &doc.iris_reportability,
                                 &doc.abstract,      &doc.event_description, &doc.cause_description};
  json out = json::object();
  out["doc_id"] = doc.doc_id;
  for (std::size_t i = 0; i < std::size(kDocumentFields); ++i) out[kDocumentFields[i]] = *values[i];
  return out;
}

LerDocument document_from_json(const json& object, std::size_t ordinal) {
  if (!object.is_object()) throw CorpusError("document must be a JSON object");
  LerDocument doc;
  if (const auto it = object.find("doc_id"); it != object.end() && it->is_string()) {
    doc.doc_id = it->get<std::string>();
  } else {
    doc.doc_id = "doc" + std::to_string(ordinal);
  }
  std::string* targets[] = {&doc.facility_name, &doc.title,        &doc.event_date,
                            &doc.report_date,   &doc.cause,        &doc.system,
                            &doc.component,     &doc.manufacturer, &doc.iris_reportability,
                            &doc.abstract,      &doc.event_description, &doc.cause_description};
  const std::string context = "document " + doc.doc_id;
  for (std::size_t i = 0; i < std::size(kDocumentFields); ++i) {
    *targets[i] = required_string(object, kDocumentFields[i], context);
  }
  return doc;
}

std::vector<json> read_json_lines(std::istream& in) {
  std::vector<json> objects;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      objects.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return objects;
}

std::vector<CorpusRecord> read_corpus(std::istream& in) {
  std::vector<CorpusRecord> records;
  for (const auto& object : read_json_lines(in)) records.push_back(record_from_json(object));
  return records;
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path);
  return in;
}

}  // namespace

std::vector<CorpusRecord> read_corpus_file(const std::string& path) {
  auto in = open_input(path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records) {
  for (const auto& record : records) {
    record.validate();
    out << to_json(record).dump() << '\n';
  }
}

void write_corpus_file(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path);
  write_corpus(out, records);
}

std::vector<LerDocument> read_documents(std::istream& in) {
  std::vector<LerDocument> docs;
  for (const auto& object : read_json_lines(in)) docs.push_back(document_from_json(object, docs.size() + 1));
  return docs;
}

std::vector<LerDocument> read_documents_file(const std::string& path) {
  auto in = open_input(path);
  return read_documents(in);
}

}  // namespace lercause::corpus
