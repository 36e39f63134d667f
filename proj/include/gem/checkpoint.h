#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gem/entity.h"
#include "gem/tensor.h"

namespace gem {

// Binary container: magic, version, a JSON header with a tensor table, then
// raw little-endian float64 data (row-major). Round-trips bit-exactly.
struct Checkpoint {
  Json header = Json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& c, const std::string& path);
// Throws DataError on a bad magic, unknown version or truncated data.
Checkpoint read_checkpoint(const std::string& path);

std::string checkpoint_to_bytes(const Checkpoint& c);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

}  // namespace gem
