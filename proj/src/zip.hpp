#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace gridclear::zip {

// Reads every regular file entry (stored or deflated) of a zip archive.
// Keys are the entry names as stored in the archive.
std::map<std::string, std::string> read_archive(const std::filesystem::path& path);

}  // namespace gridclear::zip
