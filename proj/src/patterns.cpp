#include "lercause/patterns.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace lercause::patterns {

using nlohmann::json;

std::string_view to_string(Direction direction) {
  return direction == Direction::effect_cause ? "EC" : "CE";
}

std::vector<CausalPattern> default_patterns() {
  static constexpr std::array<std::string_view, 26> effect_cause = {
      "as a result of", "attributable to", "based on",      "because of",      "cause of",
      "caused by",      "determined",      "determined by", "determined that", "determined to be",
      "discovered that", "due to",         "failure mechanism", "found",       "given that",
      "identified",     "indications",     "initiated by",  "on account of",   "owing to",
      "rendering",      "resulted from",   "revealed",      "source",          "stemmed from",
      "triggered by"};
  static constexpr std::array<std::string_view, 13> cause_effect = {
      "attributed to", "caused",     "causes",   "causing",     "generated",
      "indicated",     "indicates that", "lead to", "leading to", "leads to",
      "resulted in",   "the reason for", "yielded"};
  std::vector<CausalPattern> out;
  out.reserve(effect_cause.size() + cause_effect.size());
  for (const auto p : effect_cause) out.push_back({std::string(p), Direction::effect_cause});
  for (const auto p : cause_effect) out.push_back({std::string(p), Direction::cause_effect});
  return out;
}

namespace {

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool is_word_byte(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string normalize_phrase(std::string_view raw) {
  std::string phrase = textprep::clean_text(raw).str();
  std::transform(phrase.begin(), phrase.end(), phrase.begin(), lower);
  return phrase;
}

bool matches_at(std::string_view text, std::size_t pos, std::string_view phrase) {
  if (pos + phrase.size() > text.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    if (lower(text[pos + k]) != phrase[k]) return false;
  }
  const std::size_t end = pos + phrase.size();
  return end == text.size() || !is_word_byte(text[end]);
}

bool is_trim_byte(char c) { return c == ' ' || c == '.' || c == ',' || c == ';' || c == ':'; }

std::string_view trim_operand(std::string_view s) {
  while (!s.empty() && is_trim_byte(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_trim_byte(s.back())) s.remove_suffix(1);
  return s;
}

constexpr std::string_view kOpenCurly = "\xE2\x80\x9C";
constexpr std::string_view kCloseCurly = "\xE2\x80\x9D";

std::size_t count_of(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string_view::npos; pos = s.find(needle, pos + needle.size())) ++n;
  return n;
}

// Drops an edge quotation mark that has no partner inside the operand.
std::string_view drop_unbalanced_quotes(std::string_view s) {
  if (!s.empty() && s.front() == '"' && count_of(s, "\"") % 2 == 1) s.remove_prefix(1);
  if (!s.empty() && s.back() == '"' && count_of(s, "\"") % 2 == 1) s.remove_suffix(1);
  if (s.starts_with(kOpenCurly) && count_of(s, kCloseCurly) == 0) s.remove_prefix(kOpenCurly.size());
  if (s.ends_with(kCloseCurly) && count_of(s, kOpenCurly) == 0) s.remove_suffix(kCloseCurly.size());
  return trim_operand(s);
}

bool is_auxiliary(std::string_view word) {
  static const std::set<std::string, std::less<>> words = {"am",   "is",   "are", "was",  "were", "be",
                                                           "been", "being", "has", "have", "had",  "also"};
  std::string lowered(word);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), lower);
  return words.contains(lowered);
}

// "The bearing degradation was" + "due to" -> "The bearing degradation".
std::string_view strip_trailing_auxiliaries(std::string_view s) {
  while (!s.empty()) {
    const std::size_t space = s.rfind(' ');
    const std::size_t begin = space == std::string_view::npos ? 0 : space + 1;
    if (begin == 0 || !is_auxiliary(s.substr(begin))) break;
    s = trim_operand(s.substr(0, begin));
  }
  return s;
}

}  // namespace

std::vector<CausalPattern> read_patterns(std::istream& in) {
  std::vector<CausalPattern> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw PatternError("pattern line " + std::to_string(line_no) + ": expected <EC|CE><TAB><phrase>");
    }
    const std::string_view dir = std::string_view(line).substr(0, tab);
    CausalPattern pattern;
    if (dir == "EC") {
      pattern.direction = Direction::effect_cause;
    } else if (dir == "CE") {
      pattern.direction = Direction::cause_effect;
    } else {
      throw PatternError("pattern line " + std::to_string(line_no) + ": unknown direction '" + std::string(dir) + "'");
    }
    pattern.phrase = normalize_phrase(std::string_view(line).substr(tab + 1));
    if (pattern.phrase.empty()) throw PatternError("pattern line " + std::to_string(line_no) + ": empty phrase");
    out.push_back(std::move(pattern));
  }
  return out;
}

std::vector<CausalPattern> read_patterns_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PatternError("cannot open pattern file " + path);
  return read_patterns(in);
}

void write_patterns(std::ostream& out, const std::vector<CausalPattern>& patterns) {
  for (const auto& p : patterns) out << to_string(p.direction) << '\t' << p.phrase << '\n';
}

PatternMatcher::PatternMatcher(std::vector<CausalPattern> patterns) : patterns_(std::move(patterns)) {
  if (patterns_.empty()) throw PatternError("pattern table is empty");
  std::set<std::string> seen;
  for (auto& p : patterns_) {
    p.phrase = normalize_phrase(p.phrase);
    if (p.phrase.empty()) throw PatternError("empty pattern phrase");
    if (!seen.insert(p.phrase).second) throw PatternError("duplicate pattern phrase '" + p.phrase + "'");
  }
  std::stable_sort(patterns_.begin(), patterns_.end(),
                   [](const CausalPattern& a, const CausalPattern& b) { return a.phrase.size() > b.phrase.size(); });
}

std::vector<PatternMatch> PatternMatcher::find(const textprep::CleanText& cleaned) const {
  const std::string_view text = cleaned.view();
  std::vector<PatternMatch> matches;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (pos > 0 && is_word_byte(text[pos - 1])) {
      ++pos;
      continue;
    }
    const CausalPattern* hit = nullptr;
    for (const auto& p : patterns_) {
      if (matches_at(text, pos, p.phrase)) {
        hit = &p;
        break;
      }
    }
    if (hit == nullptr) {
      ++pos;
      continue;
    }
    matches.push_back({*hit, pos, pos + hit->phrase.size()});
    pos += hit->phrase.size();
  }
  return matches;
}

std::vector<CauseEffectPair> PatternMatcher::extract(const textprep::CleanText& cleaned,
                                                     std::string_view source_id) const {
  const std::string_view text = cleaned.view();
  const auto matches = find(cleaned);
  std::vector<CauseEffectPair> pairs;
  if (matches.empty()) return pairs;
  const auto sentences = textprep::sentence_spans(cleaned);

  for (std::size_t j = 0; j < matches.size(); ++j) {
    const auto& m = matches[j];
    std::size_t sent_begin = 0;
    std::size_t sent_end = text.size();
    for (const auto& [b, e] : sentences) {
      if (m.start >= b && m.start < e) {
        sent_begin = b;
        sent_end = e;
        break;
      }
    }
    const std::size_t left_begin = std::max(sent_begin, j == 0 ? std::size_t{0} : matches[j - 1].end);
    const std::size_t right_end = std::min(sent_end, j + 1 == matches.size() ? text.size() : matches[j + 1].start);
    std::string_view left = text.substr(left_begin, m.start - left_begin);
    std::string_view right = text.substr(m.end, right_end - m.end);
    left = strip_trailing_auxiliaries(drop_unbalanced_quotes(trim_operand(left)));
    right = drop_unbalanced_quotes(trim_operand(right));
    if (left.empty() || right.empty()) continue;

    CauseEffectPair pair;
    const bool effect_first = m.pattern.direction == Direction::effect_cause;
    pair.cause = std::string(effect_first ? right : left);
    pair.effect = std::string(effect_first ? left : right);
    pair.pattern = m.pattern.phrase;
    pair.source_id = std::string(source_id);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<PatternMatch> find_matches(const textprep::CleanText& text, const std::vector<CausalPattern>& patterns) {
  return PatternMatcher(patterns).find(text);
}

std::vector<std::string_view> segments(const textprep::CleanText& cleaned, const std::vector<PatternMatch>& matches) {
  const std::string_view text = cleaned.view();
  std::vector<std::string_view> out;
  std::size_t cursor = 0;
  for (const auto& m : matches) {
    out.push_back(text.substr(cursor, m.start - cursor));
    cursor = m.end;
  }
  out.push_back(text.substr(cursor));
  return out;
}

std::vector<CauseEffectPair> extract_pairs(const textprep::CleanText& text, const std::vector<CausalPattern>& patterns,
                                           std::string_view source_id) {
  return PatternMatcher(patterns).extract(text, source_id);
}

std::map<std::string, std::size_t> pattern_histogram(const std::vector<corpus::CorpusRecord>& records,
                                                     const std::vector<CausalPattern>& patterns) {
  const PatternMatcher matcher(patterns);
  std::map<std::string, std::size_t> counts;
  for (const auto& record : records) {
    for (const auto& m : matcher.find(textprep::clean_text(record.text))) ++counts[m.pattern.phrase];
  }
  return counts;
}

json to_json(const CauseEffectPair& pair) {
  return json{{"source_id", pair.source_id}, {"cause", pair.cause}, {"effect", pair.effect}, {"pattern", pair.pattern}};
}

CauseEffectPair pair_from_json(const json& object) {
  if (!object.is_object()) throw PatternError("cause-effect pair must be a JSON object");
  CauseEffectPair pair;
  try {
    pair.cause = object.at("cause").get<std::string>();
    pair.effect = object.at("effect").get<std::string>();
    pair.pattern = object.value("pattern", std::string{});
    pair.source_id = object.value("source_id", std::string{});
  } catch (const json::exception& e) {
    throw PatternError(std::string("malformed cause-effect pair: ") + e.what());
  }
  return pair;
}

}  // namespace lercause::patterns
