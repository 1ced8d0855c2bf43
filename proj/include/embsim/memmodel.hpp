#pragma once

// Closed-form capacity, bandwidth, IOPS, endurance and power models.
//
// The formulas are stated over average table shapes (T tables of average H
// rows, pooling L); here they are computed as exact per-table sums, which
// reduce to the averaged form when all tables are identical.

#include <span>
#include <stdexcept>

#include "embsim/model.hpp"

namespace embsim {

// Sum of H x D x p over tables.
inline std::uint64_t sparse_param_bytes(const ModelSpec& model) {
  std::uint64_t total = 0;
  for (const auto& t : model.tables)
    total += t.rows * static_cast<std::uint64_t>(t.dim) * t.precision_bytes;
  return total;
}

// Sum of H x (D + o) x p over tables.
inline std::uint64_t capacity_with_optimizer_bytes(const ModelSpec& model) {
  std::uint64_t total = 0;
  for (const auto& t : model.tables) total += t.table_bytes();
  return total;
}

// Per-table share of the bandwidth model: D x p x L x 2 bytes per query.
inline double table_bytes_per_query(const TableSpec& t) {
  return static_cast<double>(t.dim) * t.precision_bytes * t.pooling * 2.0;
}

// QPS x sum of (D x p x L) x 2; forward and backward both consume every row.
inline double memory_bandwidth_bytes_per_s(const ModelSpec& model) {
  double per_query = 0.0;
  for (const auto& t : model.tables) per_query += table_bytes_per_query(t);
  return model.target_qps * per_query;
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must be in [0, 1]");
}

// IOPS demanded of block storage: qps x sum of L x alpha, where alpha is the
// cache MISS ratio (70% hit rate => alpha 0.3).
inline double required_iops(double qps, std::span<const TableSpec> block_tables,
                            double alpha) {
  check_alpha(alpha);
  double pooled = 0.0;
  for (const auto& t : block_tables) pooled += t.pooling;
  return qps * pooled * alpha;
}

// Bytes written per day: 86400 x qps x sum of L x D x p x alpha.
inline double writes_per_day_bytes(double qps,
                                   std::span<const TableSpec> block_tables,
                                   double alpha) {
  check_alpha(alpha);
  double per_query = 0.0;
  for (const auto& t : block_tables)
    per_query += t.pooling * static_cast<double>(t.dim) * t.precision_bytes;
  return 86400.0 * qps * per_query * alpha;
}

struct EnduranceVerdict {
  bool pass = true;
  double excess_bytes_per_day = 0.0;  // nonzero only on fail
};

inline EnduranceVerdict check_endurance(double writes_per_day,
                                        const MemoryDevice& device) {
  if (!device.endurance_bytes_per_day)
    throw std::invalid_argument(
        std::string(kind_name(device.kind)) +
        ": endurance is not modeled for byte-addressable devices");
  EnduranceVerdict v;
  double limit = *device.endurance_bytes_per_day;
  if (writes_per_day > limit) {
    v.pass = false;
    v.excess_bytes_per_day = writes_per_day - limit;
  }
  return v;
}

// Capacity-proportional power for everything except HBM, whose rate is per
// GB/s of used bandwidth. Result in watts.
inline double platform_power_watts(const PlatformConfig& platform,
                                   double hbm_bw_used_gbs) {
  double watts = 0.0;
  for (const auto& d : platform.devices) {
    if (d.kind == DeviceKind::HBM) {
      watts += d.power_mw_per_gb * hbm_bw_used_gbs / 1000.0;
    } else {
      watts += d.power_mw_per_gb * (static_cast<double>(d.capacity_bytes) / kGB) /
               1000.0;
    }
  }
  return watts;
}

}  // namespace embsim
