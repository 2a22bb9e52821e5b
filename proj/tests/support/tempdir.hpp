#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

// Fresh directory under the system temp root. Not cleaned up; the test
// sandbox is ephemeral and keeping outputs around helps post-mortems.
inline std::string fresh_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  const auto stamp =
      std::chrono::steady_clock::now().time_since_epoch().count();
  fs::path p = fs::temp_directory_path() /
               ("vulmtl_" + tag + "_" + std::to_string(stamp) + "_" +
                std::to_string(counter.fetch_add(1)));
  fs::create_directories(p);
  return p.string();
}

inline std::string write_file(const std::string& dir, const std::string& name,
                              const std::string& content) {
  const std::filesystem::path p = std::filesystem::path(dir) / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p.string();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil
