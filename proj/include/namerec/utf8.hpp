#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace namerec::utf8 {

struct Decoded {
  char32_t cp;
  std::size_t len;  // bytes consumed (>= 1 even for malformed input)
};

/// Decodes the code point starting at byte `pos`. Malformed bytes decode as U+FFFD, length 1.
Decoded decode(std::string_view s, std::size_t pos);

void append(std::string& out, char32_t cp);

std::size_t length(std::string_view s);

bool is_whitespace(char32_t cp);

/// ASCII symbols plus the Unicode general punctuation blocks (P* categories), see README.
bool is_punctuation(char32_t cp);

bool is_upper(char32_t cp);
bool is_lower(char32_t cp);
bool is_letter(char32_t cp);
bool is_digit(char32_t cp);

/// Letters, digits, and any other non-space, non-punctuation code point.
bool is_word_char(char32_t cp);

/// Byte offset of every code point boundary; entry i is the byte offset of code point i and the
/// final entry equals the byte length.
class OffsetMap {
 public:
  explicit OffsetMap(std::string_view text);

  std::size_t char_count() const { return starts_.size() - 1; }
  /// Byte offset of code point `c`; c == char_count() maps to the byte length.
  std::size_t to_byte(std::size_t c) const { return starts_.at(c); }
  /// Code point index of byte offset `b`; throws std::out_of_range unless b is on a boundary.
  std::size_t to_char(std::size_t b) const;

 private:
  std::vector<std::size_t> starts_;
};

}  // namespace namerec::utf8
