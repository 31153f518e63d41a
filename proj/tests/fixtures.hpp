#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace fixture {

inline std::filesystem::path data(const std::string& name) {
  return std::filesystem::path(GRIDCLEAR_TEST_DATA) / name;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("gridclear_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
