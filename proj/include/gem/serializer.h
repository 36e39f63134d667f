#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gem/entity.h"

namespace gem {

// Token <-> id map with stable reserved ids. Growth is append-only.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kCol = 4;
  static constexpr int kVal = 5;

  Vocabulary();

  std::optional<int> find(std::string_view token) const;
  int id_or_unk(std::string_view token) const;
  int add(const std::string& token);
  // Adds the anchor tag of an attribute; throws UsageError when the tag
  // would collide with a reserved tag.
  int add_anchor(std::string_view attribute);
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  Json to_json() const;
  // Throws DataError when ids are not a bijection onto [0, size) or a
  // reserved tag is missing or moved.
  static Vocabulary from_json(const Json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// "[<NAME>]": the attribute name uppercased, non-alphanumerics as '_'.
std::string anchor_tag(std::string_view attribute);
bool is_reserved_tag(std::string_view token);

struct SerialPiece {
  enum class Kind { Tag, Anchor, Text };
  Kind kind;
  std::string text;       // the tag itself or raw text
  std::string attribute;  // set for Anchor pieces
};

// Structured form of serialize_entry: tags, anchor tags and raw text runs.
std::vector<SerialPiece> serialize_pieces(const EntityEntry& e, bool use_anchor_tags);

// "[COL] attr [VAL] value ..." with nested maps recursing and lists
// space-joined (lists of maps serialize each element in order). With anchor
// tags, each top-level [COL] becomes the attribute's tag.
std::string serialize_entry(const EntityEntry& e, bool use_anchor_tags);

// Normalized words with leading/trailing ASCII punctuation split off.
std::vector<std::string> word_tokens(std::string_view text);

// Whitespace tokens; bracketed uppercase tags are looked up verbatim, other
// tokens go through word_tokens. Unknown tokens are added when grow is set,
// otherwise mapped to [UNK].
std::vector<int> tokenize(std::string_view s, Vocabulary& vocab, bool grow);
std::vector<int> tokenize(std::string_view s, const Vocabulary& vocab);

// Adds every token (and anchor tag) of the entry's serialization.
void grow_vocabulary(const EntityEntry& e, Vocabulary& vocab, bool use_anchor_tags);

struct Anchor {
  std::string attribute;
  std::size_t position;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

struct SerializedSequence {
  std::vector<int> token_ids;
  std::vector<Anchor> anchors;  // sorted by position
  std::optional<std::size_t> side_boundary;  // index of [SEP] in pair inputs
};

// "[CLS] a [SEP] b". Each side gets floor((max_len-2)/2) tokens; a side
// shorter than its budget donates the rest to the other. Throws UsageError
// when max_len < 8.
SerializedSequence serialize_pair(const EntityEntry& a, const EntityEntry& b,
                                  const Vocabulary& vocab, std::size_t max_len,
                                  bool use_anchor_tags = true);

// "[CLS] e" truncated to max_len, for encoding one entity on its own.
SerializedSequence serialize_single(const EntityEntry& e, const Vocabulary& vocab,
                                    std::size_t max_len, bool use_anchor_tags = true);

}  // namespace gem
