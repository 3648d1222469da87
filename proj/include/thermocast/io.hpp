#pragma once

#include <string>
#include <string_view>

namespace thermocast {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file. Throws IoError on an empty or unwritable path.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

}  // namespace thermocast
