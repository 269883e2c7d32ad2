#pragma once

#include <string>

namespace saf {

/// Writes bytes to a sibling temp file and renames it over the target, so
/// readers never observe a partial file.  Raises IoError on any failure.
void atomic_write_file(const std::string& path, const std::string& bytes);

/// Reads a whole file into memory.  Raises IoError if unreadable.
std::string read_file(const std::string& path);

} // namespace saf
