#include "gem/text.h"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <stdexcept>

namespace gem {
namespace {

// Calls fn(code_point, begin, end) for every code point in s. Ill-formed
// bytes are passed through as U+FFFD covering one byte.
template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const int32_t length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) c = 0xFFFD;
    fn(c, static_cast<std::size_t>(start), static_cast<std::size_t>(i));
  }
}

}  // namespace

std::string normalize_text(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC unavailable");
  icu::UnicodeString composed = nfc->normalize(u, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  std::string utf8;
  composed.toUTF8String(utf8);

  std::string out;
  out.reserve(utf8.size());
  bool pending_space = false;
  for_each_code_point(utf8, [&](UChar32 c, std::size_t b, std::size_t e) {
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.empty();
      return;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.append(utf8, b, e - b);
  });
  return out;
}

std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> chars;
  for_each_code_point(s, [&](UChar32, std::size_t b, std::size_t e) {
    chars.emplace_back(s.substr(b, e - b));
  });
  return chars;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for_each_code_point(s, [&](UChar32, std::size_t, std::size_t) { ++n; });
  return n;
}

std::vector<std::string> alnum_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  std::size_t run_begin = 0;
  bool in_run = false;
  for_each_code_point(s, [&](UChar32 c, std::size_t b, std::size_t) {
    const bool alnum = u_isalnum(c) != 0;
    if (alnum && !in_run) {
      run_begin = b;
      in_run = true;
    } else if (!alnum && in_run) {
      tokens.emplace_back(s.substr(run_begin, b - run_begin));
      in_run = false;
    }
  });
  if (in_run) tokens.emplace_back(s.substr(run_begin));
  return tokens;
}

std::vector<std::string> char_qgrams(std::string_view s, int q) {
  if (q < 1) throw std::invalid_argument("q must be positive");
  std::vector<std::size_t> offsets;
  for_each_code_point(s, [&](UChar32, std::size_t b, std::size_t) {
    offsets.push_back(b);
  });
  offsets.push_back(s.size());
  const std::size_t n = offsets.size() - 1;
  std::vector<std::string> grams;
  if (n == 0) return grams;
  const auto uq = static_cast<std::size_t>(q);
  if (n < uq) {
    grams.emplace_back(s);
    return grams;
  }
  grams.reserve(n - uq + 1);
  for (std::size_t i = 0; i + uq <= n; ++i) {
    grams.emplace_back(s.substr(offsets[i], offsets[i + uq] - offsets[i]));
  }
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace gem

namespace gem {

const std::unordered_set<std::string>& english_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",    "by",   "for",  "from",
      "has",  "have", "he",   "her",  "his",  "i",    "in",    "is",   "it",   "its",
      "of",   "on",   "or",   "our",  "she",  "that", "the",   "their", "them", "there",
      "they", "this", "to",   "was",  "we",   "were", "will",  "with", "you",  "your",
      "all",  "any",  "but",  "can",  "do",   "if",   "into",  "not",  "so",   "who"};
  return words;
}

std::unordered_set<std::string> keyword_set(std::string_view text,
                                            const std::unordered_set<std::string>& stopwords) {
  std::unordered_set<std::string> out;
  for (auto& t : alnum_tokens(normalize_text(text))) {
    if (!stopwords.contains(t)) out.insert(std::move(t));
  }
  return out;
}

}  // namespace gem
