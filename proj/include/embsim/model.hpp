#pragma once

// Model and platform descriptions: embedding table shapes, memory device
// characteristics, and built-in device presets.

#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "embsim/common.hpp"

namespace embsim {

struct TableSpec {
  std::string id;
  std::uint64_t rows = 1;            // H
  std::uint32_t dim = 1;             // D
  std::uint32_t precision_bytes = 4; // p
  double pooling = 1.0;              // L, average rows read per sample
  std::uint32_t optimizer_width = 0; // o, extra elements per row

  std::uint32_t row_elems() const { return dim + optimizer_width; }
  std::uint64_t row_bytes() const {
    return static_cast<std::uint64_t>(row_elems()) * precision_bytes;
  }
  std::uint64_t table_bytes() const { return rows * row_bytes(); }

  void validate() const {
    if (id.empty()) throw std::invalid_argument("table id empty");
    if (rows < 1) throw std::invalid_argument("table rows must be >= 1");
    if (dim < 1) throw std::invalid_argument("table dim must be >= 1");
    if (precision_bytes != 2 && precision_bytes != 4 && precision_bytes != 8)
      throw std::invalid_argument("precision_bytes must be 2, 4 or 8");
    if (!(pooling > 0.0)) throw std::invalid_argument("pooling must be > 0");
  }
};

struct ModelSpec {
  std::vector<TableSpec> tables;
  double target_qps = 0.0;

  void validate() const {
    if (target_qps < 0.0) throw std::invalid_argument("target_qps negative");
    for (std::size_t i = 0; i < tables.size(); ++i) {
      tables[i].validate();
      for (std::size_t j = i + 1; j < tables.size(); ++j) {
        if (tables[i].id == tables[j].id)
          throw std::invalid_argument("duplicate table id: " + tables[i].id);
      }
    }
  }

  // Index of table by id, or throws.
  std::uint32_t table_index(const std::string& id) const {
    for (std::size_t i = 0; i < tables.size(); ++i)
      if (tables[i].id == id) return static_cast<std::uint32_t>(i);
    throw std::out_of_range("unknown table id: " + id);
  }

  std::uint64_t hash() const {
    std::ostringstream os;
    for (const auto& t : tables) {
      os << t.id << '|' << t.rows << '|' << t.dim << '|' << t.precision_bytes
         << '|' << t.pooling << '|' << t.optimizer_width << ';';
    }
    return fnv1a(os.str());
  }
};

enum class DeviceKind { HBM, DRAM, BYA_SCM, BLA_SCM, NAND_SSD };

inline const char* kind_name(DeviceKind k) {
  switch (k) {
    case DeviceKind::HBM: return "HBM";
    case DeviceKind::DRAM: return "DRAM";
    case DeviceKind::BYA_SCM: return "BYA_SCM";
    case DeviceKind::BLA_SCM: return "BLA_SCM";
    case DeviceKind::NAND_SSD: return "NAND_SSD";
  }
  return "?";
}

inline DeviceKind kind_from_name(const std::string& s) {
  if (s == "HBM") return DeviceKind::HBM;
  if (s == "DRAM") return DeviceKind::DRAM;
  if (s == "BYA_SCM") return DeviceKind::BYA_SCM;
  if (s == "BLA_SCM") return DeviceKind::BLA_SCM;
  if (s == "NAND_SSD") return DeviceKind::NAND_SSD;
  throw std::invalid_argument("unknown device kind: " + s);
}

inline bool is_block_kind(DeviceKind k) {
  return k == DeviceKind::BLA_SCM || k == DeviceKind::NAND_SSD;
}

struct MemoryDevice {
  DeviceKind kind = DeviceKind::DRAM;
  std::uint64_t capacity_bytes = 0;
  double bandwidth_bytes_per_s = 0.0;
  std::optional<std::uint32_t> block_bytes;          // block kinds only
  std::optional<double> iops_limit;
  std::optional<double> endurance_bytes_per_day;     // block kinds only
  double power_mw_per_gb = 0.0;  // for HBM: mW per GB/s of used bandwidth
  double latency_p50_ns = 100.0;

  void validate() const {
    if (is_block_kind(kind) != block_bytes.has_value())
      throw std::invalid_argument(
          std::string(kind_name(kind)) +
          ": block_bytes present iff device is block-addressable");
    if (endurance_bytes_per_day.has_value() != block_bytes.has_value())
      throw std::invalid_argument(
          std::string(kind_name(kind)) +
          ": endurance modeled only for block-addressable devices");
    if (power_mw_per_gb < 0.0)
      throw std::invalid_argument("power rate negative");
    if (!(latency_p50_ns > 0.0))
      throw std::invalid_argument("latency must be positive");
  }
};

struct PlatformConfig {
  std::vector<MemoryDevice> devices;
  std::uint32_t gpu_count = 1;

  void validate() const {
    if (gpu_count < 1) throw std::invalid_argument("gpu_count must be >= 1");
    bool has_hbm = false;
    for (std::size_t i = 0; i < devices.size(); ++i) {
      devices[i].validate();
      if (devices[i].kind == DeviceKind::HBM) has_hbm = true;
      for (std::size_t j = i + 1; j < devices.size(); ++j)
        if (devices[i].kind == devices[j].kind)
          throw std::invalid_argument(std::string("duplicate device kind: ") +
                                      kind_name(devices[i].kind));
    }
    if (!has_hbm)
      throw std::invalid_argument("platform requires exactly one HBM entry");
  }

  const MemoryDevice* find(DeviceKind k) const {
    for (const auto& d : devices)
      if (d.kind == k) return &d;
    return nullptr;
  }
};

constexpr double kGB = 1e9;

// Built-in device profiles: capacity/bandwidth per host, power rates, access
// granularity and endurance from published product characteristics.
inline MemoryDevice device_preset(DeviceKind kind) {
  MemoryDevice d;
  d.kind = kind;
  switch (kind) {
    case DeviceKind::HBM:
      d.capacity_bytes = static_cast<std::uint64_t>(320 * kGB);
      d.bandwidth_bytes_per_s = 12800 * kGB;
      d.power_mw_per_gb = 5000.0;  // mW per GB/s used
      d.latency_p50_ns = 100.0;
      break;
    case DeviceKind::DRAM:
      d.capacity_bytes = static_cast<std::uint64_t>(384 * kGB);
      d.bandwidth_bytes_per_s = 200 * kGB;
      d.power_mw_per_gb = 375.0;
      d.latency_p50_ns = 100.0;
      break;
    case DeviceKind::BYA_SCM:
      d.capacity_bytes = static_cast<std::uint64_t>(2048 * kGB);
      d.bandwidth_bytes_per_s = 84 * kGB;
      d.power_mw_per_gb = 98.0;
      d.latency_p50_ns = 350.0;
      break;
    case DeviceKind::BLA_SCM:
      d.capacity_bytes = static_cast<std::uint64_t>(2048 * kGB);
      d.bandwidth_bytes_per_s = 6 * kGB;
      d.block_bytes = 4096;
      d.iops_limit = 1e6;
      d.endurance_bytes_per_day = 200e12;  // 200 TB/day
      d.power_mw_per_gb = 35.0;
      d.latency_p50_ns = 10e3;  // ~10 us
      break;
    case DeviceKind::NAND_SSD:
      d.capacity_bytes = static_cast<std::uint64_t>(8192 * kGB);
      d.bandwidth_bytes_per_s = 6 * kGB;
      d.block_bytes = 4096;
      d.iops_limit = 500e3;
      d.endurance_bytes_per_day = 8e12;  // 8 TB/day
      d.power_mw_per_gb = 5.7;
      d.latency_p50_ns = 100e3;  // ~100 us
      break;
  }
  return d;
}

}  // namespace embsim
