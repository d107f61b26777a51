#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lexmine::text {

/// A word with byte offsets [begin, end) into the source string.
struct Token {
  std::string folded;
  std::size_t begin = 0;
  std::size_t end = 0;
};

bool is_valid_utf8(std::string_view bytes);
std::string latin1_to_utf8(std::string_view bytes);

/// Simple case folding covering Latin, Greek and Cyrillic letters.
/// Does not expand ß.
std::string casefold(std::string_view utf8);

/// Splits into maximal runs of letters and digits. Everything else
/// (whitespace, punctuation, symbols, dashes, quotes) separates words.
std::vector<Token> tokenize(std::string_view utf8, bool fold = true);

std::string trim(std::string_view s);

}  // namespace lexmine::text
