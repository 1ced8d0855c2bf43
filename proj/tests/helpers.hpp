#pragma once

// Shared helpers for the test suites: scratch directories and small model /
// platform builders.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>

#include "embsim/model.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<std::uint64_t> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("embsim-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

inline embsim::TableSpec table(const std::string& id, std::uint64_t rows,
                               std::uint32_t dim, std::uint32_t precision = 4,
                               double pooling = 1.0,
                               std::uint32_t optimizer_width = 0) {
  embsim::TableSpec t;
  t.id = id;
  t.rows = rows;
  t.dim = dim;
  t.precision_bytes = precision;
  t.pooling = pooling;
  t.optimizer_width = optimizer_width;
  return t;
}

inline embsim::PlatformConfig small_platform() {
  embsim::PlatformConfig p;
  p.gpu_count = 1;
  p.devices = {embsim::device_preset(embsim::DeviceKind::HBM),
               embsim::device_preset(embsim::DeviceKind::DRAM),
               embsim::device_preset(embsim::DeviceKind::NAND_SSD)};
  return p;
}

}  // namespace testutil
