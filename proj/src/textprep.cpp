#include "lercause/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace lercause::textprep {

namespace {

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

bool is_blank_byte(unsigned char c) { return c == ' ' || c < 0x20 || c == 0x7F; }

// Width in bytes of a removable artifact starting at `pos`: U+FFFD or a
// literal six-character `\uXXXX` escape. Zero if neither.
std::size_t artifact_width(std::string_view s, std::size_t pos) {
  if (s.compare(pos, 3, "\xEF\xBF\xBD") == 0) return 3;
  if (pos + 6 <= s.size() && s[pos] == '\\' && s[pos + 1] == 'u' && is_hex(s[pos + 2]) &&
      is_hex(s[pos + 3]) && is_hex(s[pos + 4]) && is_hex(s[pos + 5])) {
    return 6;
  }
  return 0;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Closing punctuation allowed between a terminator and the following space.
std::size_t closer_width(std::string_view s, std::size_t pos) {
  const char c = s[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  if (s.compare(pos, 3, "\xE2\x80\x9D") == 0 || s.compare(pos, 3, "\xE2\x80\x99") == 0) return 3;
  return 0;
}

std::size_t opener_width(std::string_view s, std::size_t pos) {
  const char c = s[pos];
  if (c == '"' || c == '\'' || c == '(' || c == '[') return 1;
  if (s.compare(pos, 3, "\xE2\x80\x9C") == 0 || s.compare(pos, 3, "\xE2\x80\x98") == 0) return 3;
  return 0;
}

bool is_abbreviation(std::string_view text, std::size_t terminator,
                     const std::unordered_set<std::string>& stop) {
  std::size_t begin = text.rfind(' ', terminator);
  begin = begin == std::string_view::npos ? 0 : begin + 1;
  while (begin < terminator) {
    const std::size_t w = opener_width(text, begin);
    if (w == 0) break;
    begin += w;
  }
  return stop.contains(lower_ascii(text.substr(begin, terminator + 1 - begin)));
}

}  // namespace

CleanText clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const auto c = static_cast<unsigned char>(raw[pos]);
    if (is_blank_byte(c)) {
      pending_space = true;
      ++pos;
      continue;
    }
    if (const std::size_t w = artifact_width(raw, pos); w > 0) {
      pending_space = true;
      pos += w;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
    ++pos;
  }
  return CleanText(std::move(out));
}

bool is_clean(std::string_view text) { return clean_text(text).view() == text; }

const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> list = {"No.", "Mr.", "Dr.", "Fig.", "Inc.", "U.S.", "approx."};
  return list;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    const CleanText& cleaned, const std::vector<std::string>& abbreviations) {
  const std::string_view text = cleaned.view();
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (text.empty()) return spans;

  std::unordered_set<std::string> stop;
  for (const auto& a : abbreviations) stop.insert(lower_ascii(a));

  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t end = i + 1;
    while (end < text.size()) {
      const std::size_t w = closer_width(text, end);
      if (w == 0) break;
      end += w;
    }
    if (end >= text.size() || text[end] != ' ') continue;
    std::size_t next = end + 1;
    while (next < text.size()) {
      const std::size_t w = opener_width(text, next);
      if (w == 0) break;
      next += w;
    }
    if (next >= text.size()) continue;
    const auto lead = static_cast<unsigned char>(text[next]);
    if (!std::isupper(lead) && !std::isdigit(lead)) continue;
    if (c == '.' && is_abbreviation(text, i, stop)) continue;
    spans.emplace_back(start, end);
    start = end + 1;
    i = end;
  }
  spans.emplace_back(start, text.size());
  return spans;
}

std::vector<std::string> split_sentences(const CleanText& cleaned,
                                         const std::vector<std::string>& abbreviations) {
  std::vector<std::string> sentences;
  for (const auto& [b, e] : sentence_spans(cleaned, abbreviations)) {
    sentences.emplace_back(cleaned.view().substr(b, e - b));
  }
  return sentences;
}

std::vector<SentenceWindow> build_windows(const std::vector<std::string>& sentences,
                                          std::string_view doc_id, std::span<const int> widths) {
  if (widths.empty()) throw std::invalid_argument("window widths must be nonempty");
  for (const int w : widths) {
    if (w < 1 || w > 3) throw std::invalid_argument("window width must be 1, 2 or 3");
  }
  std::vector<SentenceWindow> windows;
  std::unordered_set<std::string> seen;
  const std::size_t n = sentences.size();
  for (const int width : widths) {
    const auto w = static_cast<std::size_t>(width);
    for (std::size_t i = 0; i + w <= n; ++i) {
      SentenceWindow window;
      window.doc_id = std::string(doc_id);
      window.start_index = i;
      window.sentences.assign(sentences.begin() + static_cast<std::ptrdiff_t>(i),
                              sentences.begin() + static_cast<std::ptrdiff_t>(i + w));
      for (std::size_t k = 0; k < w; ++k) {
        if (k > 0) window.text.push_back(' ');
        window.text += window.sentences[k];
      }
      if (!seen.insert(window.text).second) continue;
      windows.push_back(std::move(window));
    }
  }
  return windows;
}

}  // namespace lercause::textprep
