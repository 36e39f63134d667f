#include "gem/checkpoint.h"

#include <bit>
#include <cstring>

#include "gem/error.h"
#include "gem/io.h"

namespace gem {
namespace {

constexpr char kMagic[8] = {'G', 'E', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

std::string checkpoint_to_bytes(const Checkpoint& c) {
  Json header = c.header;
  Json table = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    table.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size());
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, t] : c.tensors) {
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw DataError("checkpoint is truncated");
  Checkpoint c;
  try {
    c.header = Json::parse(bytes.substr(pos, header_len));
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t data_start = pos;
  for (const auto& entry : c.header.at("tensors")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t begin = data_start + offset * sizeof(double);
    const std::size_t len = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (begin + len > bytes.size()) throw DataError("checkpoint is truncated");
    Tensor t(rows, cols);
    std::memcpy(t.data(), bytes.data() + begin, len);
    c.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  c.header.erase("tensors");
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  write_text_file(path, checkpoint_to_bytes(c));
}

Checkpoint read_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_text_file(path));
}

}  // namespace gem
