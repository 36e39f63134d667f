#include "gem/serializer.h"

#include <algorithm>
#include <cctype>

#include "gem/error.h"
#include "gem/text.h"

namespace gem {
namespace {

constexpr const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[COL]", "[VAL]"};

bool is_tag_token(std::string_view t) {
  if (t.size() < 3 || t.front() != '[' || t.back() != ']') return false;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const auto c = static_cast<unsigned char>(t[i]);
    if (!(std::isupper(c) || std::isdigit(c) || c == '_')) return false;
  }
  return true;
}

// Ids of one entry's serialization plus anchor offsets relative to it.
struct EntryTokens {
  std::vector<int> ids;
  std::vector<Anchor> anchors;
};

EntryTokens entry_tokens(const EntityEntry& e, const Vocabulary& vocab, bool use_anchor_tags) {
  EntryTokens out;
  for (const auto& piece : serialize_pieces(e, use_anchor_tags)) {
    switch (piece.kind) {
      case SerialPiece::Kind::Tag:
        out.ids.push_back(vocab.find(piece.text).value());
        break;
      case SerialPiece::Kind::Anchor: {
        const auto id = vocab.find(piece.text);
        if (id) out.anchors.push_back({piece.attribute, out.ids.size()});
        out.ids.push_back(id.value_or(Vocabulary::kUnk));
        break;
      }
      case SerialPiece::Kind::Text:
        for (const auto& w : word_tokens(piece.text)) out.ids.push_back(vocab.id_or_unk(w));
        break;
    }
  }
  return out;
}

void require_reserved(const Vocabulary& vocab) {
  for (int id = 0; id < 6; ++id) {
    const auto found = vocab.find(kReserved[id]);
    if (!found || *found != id) {
      throw DataError(std::string("vocabulary is missing reserved tag ") + kReserved[id]);
    }
  }
}

void append_value(const AttributeValue& v, std::vector<SerialPiece>& out);

void append_attribute(const Attribute& a, std::vector<SerialPiece>& out, bool anchor) {
  if (anchor) out.push_back({SerialPiece::Kind::Anchor, anchor_tag(a.name), a.name});
  else out.push_back({SerialPiece::Kind::Tag, "[COL]", {}});
  out.push_back({SerialPiece::Kind::Text, a.name, {}});
  out.push_back({SerialPiece::Kind::Tag, "[VAL]", {}});
  append_value(a.value, out);
}

void scalar_text(const AttributeValue& v, std::vector<std::string>& parts) {
  switch (v.kind()) {
    case AttributeValue::Kind::Number: parts.push_back(format_number(v.as_number())); break;
    case AttributeValue::Kind::Text: parts.push_back(v.as_text()); break;
    case AttributeValue::Kind::List:
      for (const auto& item : v.as_list()) scalar_text(item, parts);
      break;
    case AttributeValue::Kind::Nested: break;
  }
}

void append_value(const AttributeValue& v, std::vector<SerialPiece>& out) {
  switch (v.kind()) {
    case AttributeValue::Kind::Nested:
      for (const auto& a : v.as_nested()) append_attribute(a, out, false);
      return;
    case AttributeValue::Kind::List: {
      const auto& items = v.as_list();
      if (!items.empty() && items[0].kind() != AttributeValue::Kind::Number &&
          items[0].kind() != AttributeValue::Kind::Text) {
        for (const auto& item : items) append_value(item, out);
        return;
      }
      std::vector<std::string> parts;
      scalar_text(v, parts);
      out.push_back({SerialPiece::Kind::Text, join(parts, " "), {}});
      return;
    }
    default: {
      std::vector<std::string> parts;
      scalar_text(v, parts);
      out.push_back({SerialPiece::Kind::Text, parts.front(), {}});
    }
  }
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto* t : kReserved) add(t);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id_or_unk(std::string_view token) const {
  return find(token).value_or(kUnk);
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::add_anchor(std::string_view attribute) {
  const auto tag = anchor_tag(attribute);
  if (is_reserved_tag(tag)) {
    throw UsageError("attribute '" + std::string(attribute) + "' collides with reserved tag " + tag);
  }
  return add(tag);
}

Json Vocabulary::to_json() const {
  Json j = Json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

Vocabulary Vocabulary::from_json(const Json& j) {
  if (!j.is_object()) throw DataError("vocabulary must be a JSON object");
  std::vector<std::string> tokens(j.size());
  std::vector<bool> seen(j.size(), false);
  for (const auto& [token, id_json] : j.items()) {
    const auto id = id_json.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= tokens.size() || seen[static_cast<std::size_t>(id)]) {
      throw DataError("vocabulary ids must be a bijection onto [0, size)");
    }
    seen[static_cast<std::size_t>(id)] = true;
    tokens[static_cast<std::size_t>(id)] = token;
  }
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  for (const auto& t : tokens) v.add(t);
  require_reserved(v);
  return v;
}

std::string anchor_tag(std::string_view attribute) {
  std::string tag = "[";
  for (const char ch : attribute) {
    const auto c = static_cast<unsigned char>(ch);
    tag.push_back(std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_');
  }
  tag.push_back(']');
  return tag;
}

bool is_reserved_tag(std::string_view token) {
  return std::any_of(std::begin(kReserved), std::end(kReserved),
                     [&](const char* r) { return token == r; });
}

std::vector<SerialPiece> serialize_pieces(const EntityEntry& e, bool use_anchor_tags) {
  std::vector<SerialPiece> out;
  for (const auto& a : e.attributes) {
    if (use_anchor_tags && is_reserved_tag(anchor_tag(a.name))) {
      throw UsageError("attribute '" + a.name + "' collides with a reserved tag");
    }
    append_attribute(a, out, use_anchor_tags);
  }
  return out;
}

std::string serialize_entry(const EntityEntry& e, bool use_anchor_tags) {
  std::vector<std::string> parts;
  for (const auto& p : serialize_pieces(e, use_anchor_tags)) {
    if (!p.text.empty()) parts.push_back(p.text);
  }
  return join(parts, " ");
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& chunk : split_whitespace(normalize_text(text))) {
    std::size_t b = 0;
    std::size_t e = chunk.size();
    const auto punct = [&](std::size_t i) {
      return std::ispunct(static_cast<unsigned char>(chunk[i])) != 0;
    };
    while (b < e && punct(b)) out.emplace_back(1, chunk[b++]);
    std::size_t tail = e;
    while (tail > b && punct(tail - 1)) --tail;
    if (tail > b) out.push_back(chunk.substr(b, tail - b));
    for (std::size_t i = tail; i < e; ++i) out.emplace_back(1, chunk[i]);
  }
  return out;
}

std::vector<int> tokenize(std::string_view s, Vocabulary& vocab, bool grow) {
  std::vector<int> ids;
  for (const auto& raw : split_whitespace(s)) {
    if (is_tag_token(raw)) {
      ids.push_back(grow ? vocab.add(raw) : vocab.id_or_unk(raw));
      continue;
    }
    for (const auto& w : word_tokens(raw)) ids.push_back(grow ? vocab.add(w) : vocab.id_or_unk(w));
  }
  return ids;
}

std::vector<int> tokenize(std::string_view s, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& raw : split_whitespace(s)) {
    if (is_tag_token(raw)) {
      ids.push_back(vocab.id_or_unk(raw));
      continue;
    }
    for (const auto& w : word_tokens(raw)) ids.push_back(vocab.id_or_unk(w));
  }
  return ids;
}

void grow_vocabulary(const EntityEntry& e, Vocabulary& vocab, bool use_anchor_tags) {
  for (const auto& piece : serialize_pieces(e, use_anchor_tags)) {
    switch (piece.kind) {
      case SerialPiece::Kind::Tag: break;
      case SerialPiece::Kind::Anchor: vocab.add_anchor(piece.attribute); break;
      case SerialPiece::Kind::Text:
        for (const auto& w : word_tokens(piece.text)) vocab.add(w);
        break;
    }
  }
}

SerializedSequence serialize_pair(const EntityEntry& a, const EntityEntry& b,
                                  const Vocabulary& vocab, std::size_t max_len,
                                  bool use_anchor_tags) {
  if (max_len < 8) throw UsageError("max_len must be >= 8");
  require_reserved(vocab);
  auto left = entry_tokens(a, vocab, use_anchor_tags);
  auto right = entry_tokens(b, vocab, use_anchor_tags);

  const std::size_t total = max_len - 2;
  const std::size_t half = total / 2;
  std::size_t left_budget = half;
  std::size_t right_budget = half;
  if (left.ids.size() <= half) {
    left_budget = left.ids.size();
    right_budget = total - left_budget;
  } else if (right.ids.size() <= half) {
    right_budget = right.ids.size();
    left_budget = total - right_budget;
  }
  left.ids.resize(std::min(left.ids.size(), left_budget));
  right.ids.resize(std::min(right.ids.size(), right_budget));

  SerializedSequence seq;
  seq.token_ids.reserve(left.ids.size() + right.ids.size() + 2);
  seq.token_ids.push_back(Vocabulary::kCls);
  seq.token_ids.insert(seq.token_ids.end(), left.ids.begin(), left.ids.end());
  seq.side_boundary = seq.token_ids.size();
  seq.token_ids.push_back(Vocabulary::kSep);
  seq.token_ids.insert(seq.token_ids.end(), right.ids.begin(), right.ids.end());

  for (const auto& an : left.anchors) {
    if (an.position < left.ids.size()) seq.anchors.push_back({an.attribute, an.position + 1});
  }
  const std::size_t offset = *seq.side_boundary + 1;
  for (const auto& an : right.anchors) {
    if (an.position < right.ids.size()) seq.anchors.push_back({an.attribute, an.position + offset});
  }
  return seq;
}

SerializedSequence serialize_single(const EntityEntry& e, const Vocabulary& vocab,
                                    std::size_t max_len, bool use_anchor_tags) {
  if (max_len < 2) throw UsageError("max_len must be >= 2");
  require_reserved(vocab);
  auto body = entry_tokens(e, vocab, use_anchor_tags);
  body.ids.resize(std::min(body.ids.size(), max_len - 1));
  SerializedSequence seq;
  seq.token_ids.push_back(Vocabulary::kCls);
  seq.token_ids.insert(seq.token_ids.end(), body.ids.begin(), body.ids.end());
  for (const auto& an : body.anchors) {
    if (an.position < body.ids.size()) seq.anchors.push_back({an.attribute, an.position + 1});
  }
  return seq;
}

}  // namespace gem
