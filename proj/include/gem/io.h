#pragma once

#include <string>
#include <vector>

#include "gem/entity.h"

namespace gem {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

// One JSON value per nonblank line. Throws ParseError on malformed lines.
std::vector<Json> read_json_lines(const std::string& path);
void write_json_lines(const std::string& path, const std::vector<Json>& rows);

}  // namespace gem
