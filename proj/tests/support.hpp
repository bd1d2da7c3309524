#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "glazelab/image.hpp"
#include "glazelab/neural.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("glazelab-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline Image random_image(int w, int h, std::uint64_t seed, double lo = 0, double hi = 1) {
  Rng rng(seed);
  std::vector<real> px(std::size_t(w) * h * 3);
  for (real& v : px) v = static_cast<real>(lo + (hi - lo) * rng.uniform());
  return Image(w, h, std::move(px));
}

}  // namespace glazelab
