#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace inml::detail {

std::string read_file(const std::string& path);

// Writes to "<path>.tmp.<pid>" then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace inml::detail
