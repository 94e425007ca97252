#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace lercause::utf8 {

/// Decodes arbitrary bytes as UTF-8, substituting U+FFFD for every
/// ill-formed sequence. The result is always well-formed UTF-8.
std::string decode_lenient(std::string_view bytes);

/// Number of code points in well-formed UTF-8 text.
std::size_t length(std::string_view text);

/// Byte offset of the code point at `index`; `index == length(text)` maps to
/// `text.size()`. Throws std::out_of_range past the end.
std::size_t byte_offset(std::string_view text, std::size_t index);

/// Substring addressed by code point offsets [begin, end).
std::string substr(std::string_view text, std::size_t begin, std::size_t end);

}  // namespace lercause::utf8
