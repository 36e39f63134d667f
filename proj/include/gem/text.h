#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gem {

// Unicode NFC, lowercase, whitespace runs collapsed, ends trimmed.
std::string normalize_text(std::string_view s);

// Splits UTF-8 into code points, each returned as its own UTF-8 string.
std::vector<std::string> utf8_chars(std::string_view s);

// Number of code points.
std::size_t utf8_length(std::string_view s);

// Maximal runs of alphanumeric code points, in order. Input is used as is;
// callers normalize first when case-insensitivity matters.
std::vector<std::string> alnum_tokens(std::string_view s);

// Distinct character q-grams of s (code points, no padding). A nonempty
// string shorter than q yields itself as the only gram. Sorted.
std::vector<std::string> char_qgrams(std::string_view s, int q);

// Jaccard similarity of two sorted, deduplicated ranges. Two empty sets
// have similarity 1.
template <typename T>
double sorted_jaccard(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t i = 0, j = 0, shared = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++shared;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(shared) /
         static_cast<double>(a.size() + b.size() - shared);
}

// Shortest decimal string that parses back to the same double.
std::string format_number(double v);

std::string trim(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace gem

#include <unordered_set>

namespace gem {

// Shipped 50-word English stopword list.
const std::unordered_set<std::string>& english_stopwords();

// Lowercased alphanumeric tokens with stopwords removed, deduplicated.
std::unordered_set<std::string> keyword_set(std::string_view text,
                                            const std::unordered_set<std::string>& stopwords);

}  // namespace gem
