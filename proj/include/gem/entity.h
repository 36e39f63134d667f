#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace gem {

using Json = nlohmann::ordered_json;

struct Attribute;

// Number, Text, List or Nested. List elements share one kind; Nested keeps
// insertion order.
class AttributeValue {
 public:
  enum class Kind { Number, Text, List, Nested };
  using List = std::vector<AttributeValue>;
  using Nested = std::vector<Attribute>;

  AttributeValue() : data_(std::string()) {}
  AttributeValue(double number) : data_(number) {}
  AttributeValue(std::string text) : data_(std::move(text)) {}
  AttributeValue(const char* text) : data_(std::string(text)) {}
  // Throws DataError when elements mix kinds.
  static AttributeValue list(List elements);
  // Throws DataError on empty or duplicate names.
  static AttributeValue nested(Nested attributes);

  Kind kind() const { return static_cast<Kind>(data_.index()); }
  bool is_text() const { return kind() == Kind::Text; }

  double as_number() const { return std::get<double>(data_); }
  const std::string& as_text() const { return std::get<std::string>(data_); }
  const List& as_list() const { return std::get<List>(data_); }
  const Nested& as_nested() const { return std::get<Nested>(data_); }

  friend bool operator==(const AttributeValue&, const AttributeValue&) = default;

 private:
  using Storage = std::variant<double, std::string, List, Nested>;
  explicit AttributeValue(Storage s) : data_(std::move(s)) {}
  Storage data_;
};

struct Attribute {
  std::string name;
  AttributeValue value;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

struct EntityEntry {
  std::string id;
  std::vector<Attribute> attributes;

  // Resolves a dotted path through nested maps; nullptr when absent.
  const AttributeValue* find(std::string_view path) const;

  friend bool operator==(const EntityEntry&, const EntityEntry&) = default;
};

enum class StructureKind { Structured, SemiStructured, Unstructured };

std::string_view to_string(StructureKind kind);

struct EntityCollection {
  std::string name;
  std::vector<EntityEntry> entries;
  StructureKind structure_kind = StructureKind::Structured;

  // Index of the entry with this id, or npos.
  std::size_t index_of(std::string_view id) const;
};

// Throws DataError on an empty list.
StructureKind classify_structure(const std::vector<EntityEntry>& entries);

// Builds an entry from a JSON object carrying a string "id". Nulls are
// dropped, booleans become "true"/"false".
EntityEntry entry_from_json(const Json& object);
Json entry_to_json(const EntityEntry& entry);

// Line-delimited JSON, one entity per line; blank lines are skipped.
// Throws ParseError (line number) or DataError (duplicate id).
EntityCollection parse_collection(const std::string& path, const std::string& name);
EntityCollection parse_collection_text(std::string_view text, const std::string& name);
void write_collection(const EntityCollection& c, const std::string& path);

// Builds a collection from entries, validating ids and classifying structure.
EntityCollection make_collection(std::string name, std::vector<EntityEntry> entries);

struct FlatAttribute {
  std::string path;
  std::string value;

  friend bool operator==(const FlatAttribute&, const FlatAttribute&) = default;
};

// Depth-first (path, text) pairs. Scalar lists are space-joined; lists of
// nested maps emit each element's paths in element order.
std::vector<FlatAttribute> flatten_attributes(const EntityEntry& entry);

// Text reached by a dotted path, descending through nested maps and every
// element of lists; multiple hits and non-text values are flattened and
// space-joined. nullopt when nothing is reached.
std::optional<std::string> resolve_text(const EntityEntry& entry, std::string_view path);

// All flattened values joined by single spaces.
std::string entry_text(const EntityEntry& entry);

}  // namespace gem
