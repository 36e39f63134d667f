#include "gem/entity.h"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "gem/error.h"
#include "gem/text.h"

namespace gem {

AttributeValue AttributeValue::list(List elements) {
  for (std::size_t i = 1; i < elements.size(); ++i) {
    if (elements[i].kind() != elements[0].kind()) {
      throw DataError("list elements must share one kind");
    }
  }
  return AttributeValue(Storage(std::move(elements)));
}

AttributeValue AttributeValue::nested(Nested attributes) {
  std::unordered_set<std::string_view> seen;
  for (const auto& a : attributes) {
    if (a.name.empty()) throw DataError("attribute name must be nonempty");
    if (!seen.insert(a.name).second) {
      throw DataError("duplicate attribute name '" + a.name + "'");
    }
  }
  return AttributeValue(Storage(std::move(attributes)));
}

const AttributeValue* EntityEntry::find(std::string_view path) const {
  const std::vector<Attribute>* level = &attributes;
  while (true) {
    const auto dot = path.find('.');
    const std::string_view head = path.substr(0, dot);
    const AttributeValue* hit = nullptr;
    for (const auto& a : *level) {
      if (a.name == head) {
        hit = &a.value;
        break;
      }
    }
    if (hit == nullptr || dot == std::string_view::npos) return hit;
    if (hit->kind() != AttributeValue::Kind::Nested) return nullptr;
    level = &hit->as_nested();
    path.remove_prefix(dot + 1);
  }
}

std::string_view to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::Structured: return "structured";
    case StructureKind::SemiStructured: return "semi_structured";
    case StructureKind::Unstructured: return "unstructured";
  }
  return "unknown";
}

std::size_t EntityCollection::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) return i;
  }
  return static_cast<std::size_t>(-1);
}

StructureKind classify_structure(const std::vector<EntityEntry>& entries) {
  if (entries.empty()) throw DataError("cannot classify an empty collection");
  bool unstructured = true;
  bool flat = true;
  for (const auto& e : entries) {
    if (e.attributes.size() != 1 || !e.attributes[0].value.is_text()) {
      unstructured = false;
    }
    for (const auto& a : e.attributes) {
      const auto k = a.value.kind();
      if (k == AttributeValue::Kind::List || k == AttributeValue::Kind::Nested) {
        flat = false;
      }
    }
  }
  if (unstructured) return StructureKind::Unstructured;
  if (!flat) return StructureKind::SemiStructured;
  // Uniform schema is compared as a set so entry order does not matter.
  const auto names_of = [](const EntityEntry& e) {
    std::set<std::string> names;
    for (const auto& a : e.attributes) names.insert(a.name);
    return names;
  };
  const auto reference = names_of(entries.front());
  for (const auto& e : entries) {
    if (names_of(e) != reference) return StructureKind::SemiStructured;
  }
  return StructureKind::Structured;
}

namespace {

// Returns false when the value is null (attribute should be dropped).
bool value_from_json(const Json& j, AttributeValue& out) {
  switch (j.type()) {
    case Json::value_t::null:
      return false;
    case Json::value_t::boolean:
      out = AttributeValue(std::string(j.get<bool>() ? "true" : "false"));
      return true;
    case Json::value_t::number_integer:
    case Json::value_t::number_unsigned:
    case Json::value_t::number_float:
      out = AttributeValue(j.get<double>());
      return true;
    case Json::value_t::string:
      out = AttributeValue(j.get<std::string>());
      return true;
    case Json::value_t::array: {
      AttributeValue::List items;
      for (const auto& item : j) {
        AttributeValue v;
        if (value_from_json(item, v)) items.push_back(std::move(v));
      }
      out = AttributeValue::list(std::move(items));
      return true;
    }
    case Json::value_t::object: {
      AttributeValue::Nested attrs;
      for (const auto& [k, v] : j.items()) {
        AttributeValue child;
        if (value_from_json(v, child)) attrs.push_back({k, std::move(child)});
      }
      out = AttributeValue::nested(std::move(attrs));
      return true;
    }
    default:
      throw DataError("unsupported JSON value");
  }
}

Json value_to_json(const AttributeValue& v) {
  switch (v.kind()) {
    case AttributeValue::Kind::Number: return v.as_number();
    case AttributeValue::Kind::Text: return v.as_text();
    case AttributeValue::Kind::List: {
      Json arr = Json::array();
      for (const auto& e : v.as_list()) arr.push_back(value_to_json(e));
      return arr;
    }
    case AttributeValue::Kind::Nested: {
      Json obj = Json::object();
      for (const auto& a : v.as_nested()) obj[a.name] = value_to_json(a.value);
      return obj;
    }
  }
  return nullptr;
}

void flatten_into(const std::string& path, const AttributeValue& v,
                  std::vector<FlatAttribute>& out) {
  switch (v.kind()) {
    case AttributeValue::Kind::Number:
      out.push_back({path, format_number(v.as_number())});
      return;
    case AttributeValue::Kind::Text:
      out.push_back({path, v.as_text()});
      return;
    case AttributeValue::Kind::Nested:
      for (const auto& a : v.as_nested()) {
        flatten_into(path.empty() ? a.name : path + "." + a.name, a.value, out);
      }
      return;
    case AttributeValue::Kind::List: {
      const auto& items = v.as_list();
      if (!items.empty() && items[0].kind() == AttributeValue::Kind::Nested) {
        for (const auto& item : items) flatten_into(path, item, out);
        return;
      }
      std::vector<FlatAttribute> parts;
      for (const auto& item : items) flatten_into(path, item, parts);
      std::vector<std::string> texts;
      for (auto& p : parts) texts.push_back(std::move(p.value));
      out.push_back({path, join(texts, " ")});
      return;
    }
  }
}

}  // namespace

EntityEntry entry_from_json(const Json& object) {
  if (!object.is_object()) throw DataError("entity must be a JSON object");
  const auto id = object.find("id");
  if (id == object.end() || !id->is_string()) {
    throw DataError("entity requires a string \"id\" field");
  }
  EntityEntry e;
  e.id = id->get<std::string>();
  if (e.id.empty()) throw DataError("entity id must be nonempty");
  AttributeValue::Nested attrs;
  for (const auto& [k, v] : object.items()) {
    if (k == "id") continue;
    AttributeValue value;
    if (value_from_json(v, value)) attrs.push_back({k, std::move(value)});
  }
  // Reuse the sibling-name validation of nested maps.
  e.attributes = AttributeValue::nested(std::move(attrs)).as_nested();
  return e;
}

Json entry_to_json(const EntityEntry& entry) {
  Json j = Json::object();
  j["id"] = entry.id;
  for (const auto& a : entry.attributes) j[a.name] = value_to_json(a.value);
  return j;
}

EntityCollection make_collection(std::string name, std::vector<EntityEntry> entries) {
  std::unordered_set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw DataError("entity id must be nonempty");
    if (!ids.insert(e.id).second) throw DataError("duplicate id '" + e.id + "'");
  }
  EntityCollection c;
  c.name = std::move(name);
  c.structure_kind =
      entries.empty() ? StructureKind::Structured : classify_structure(entries);
  c.entries = std::move(entries);
  return c;
}

EntityCollection parse_collection_text(std::string_view text, const std::string& name) {
  std::vector<EntityEntry> entries;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    EntityEntry e;
    try {
      e = entry_from_json(Json::parse(line));
    } catch (const Json::parse_error& ex) {
      throw ParseError(line_no, std::string("malformed JSON: ") + ex.what());
    } catch (const DataError& ex) {
      throw ParseError(line_no, ex.what());
    }
    if (!ids.insert(e.id).second) {
      throw DataError("duplicate id '" + e.id + "' at line " + std::to_string(line_no));
    }
    entries.push_back(std::move(e));
  }
  return make_collection(name, std::move(entries));
}

EntityCollection parse_collection(const std::string& path, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_collection_text(buf.str(), name);
}

void write_collection(const EntityCollection& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& e : c.entries) out << entry_to_json(e).dump() << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<FlatAttribute> flatten_attributes(const EntityEntry& entry) {
  std::vector<FlatAttribute> out;
  for (const auto& a : entry.attributes) flatten_into(a.name, a.value, out);
  return out;
}

namespace {

void resolve_into(const AttributeValue& v, std::string_view rest,
                  std::vector<std::string>& hits) {
  if (v.kind() == AttributeValue::Kind::List) {
    for (const auto& item : v.as_list()) resolve_into(item, rest, hits);
    return;
  }
  if (rest.empty()) {
    std::vector<FlatAttribute> flat;
    flatten_into("", v, flat);
    for (auto& f : flat) hits.push_back(std::move(f.value));
    return;
  }
  if (v.kind() != AttributeValue::Kind::Nested) return;
  const auto dot = rest.find('.');
  const auto head = rest.substr(0, dot);
  const auto tail = dot == std::string_view::npos ? std::string_view() : rest.substr(dot + 1);
  for (const auto& a : v.as_nested()) {
    if (a.name == head) resolve_into(a.value, tail, hits);
  }
}

}  // namespace

std::optional<std::string> resolve_text(const EntityEntry& entry, std::string_view path) {
  const auto dot = path.find('.');
  const auto head = path.substr(0, dot);
  const auto tail = dot == std::string_view::npos ? std::string_view() : path.substr(dot + 1);
  std::vector<std::string> hits;
  bool reached = false;
  for (const auto& a : entry.attributes) {
    if (a.name != head) continue;
    const auto before = hits.size();
    resolve_into(a.value, tail, hits);
    reached = reached || hits.size() > before || tail.empty();
  }
  if (!reached) return std::nullopt;
  return join(hits, " ");
}

std::string entry_text(const EntityEntry& entry) {
  std::vector<std::string> parts;
  for (auto& f : flatten_attributes(entry)) {
    if (!f.value.empty()) parts.push_back(std::move(f.value));
  }
  return join(parts, " ");
}

}  // namespace gem
