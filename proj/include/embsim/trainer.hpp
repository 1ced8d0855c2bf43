#pragma once

// Trace-driven simulated training: placement-directed routing, forward read /
// backward update through cache + store for block-placed tables, direct
// in-memory regions for byte-placed tables, pipelined prefetch with pinning,
// and latency/QPS/power/energy/endurance accounting. A flat-store reference
// run serves as the independent oracle.

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "embsim/cache.hpp"
#include "embsim/kvstore.hpp"
#include "embsim/memmodel.hpp"
#include "embsim/placement.hpp"
#include "embsim/workload.hpp"

namespace embsim {

struct PipelineConfig {
  std::uint32_t depth = 1;  // in-flight batches; 1 = no pipelining
};

struct UpdateRule {
  enum class Kind { SGD, AggregateCount };
  Kind kind = Kind::SGD;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

// Deterministic pseudo-gradient: a pure function of (seed, batch, key, elem).
inline double pseudo_gradient(std::uint64_t seed, std::uint64_t batch,
                              const RowKey& key, std::uint32_t elem) {
  std::uint64_t u = mix64(mix64(seed, batch),
                          mix64(key.index, 0xc0ffee00ULL + key.table) + elem);
  return 2.0 * to_unit_double(splitmix64(u)) - 1.0;
}

inline void apply_update(const UpdateRule& rule, std::uint64_t batch,
                         const RowKey& key, const TableSpec& table,
                         Byte* row) {
  const int p = static_cast<int>(table.precision_bytes);
  for (std::uint32_t e = 0; e < table.row_elems(); ++e) {
    Byte* cell = row + static_cast<std::size_t>(e) * p;
    double v = decode_element(cell, p);
    if (rule.kind == UpdateRule::Kind::AggregateCount) {
      v += 1.0;
    } else {
      v -= rule.learning_rate * pseudo_gradient(rule.seed, batch, key, e);
    }
    encode_element(v, p, cell);
  }
}

struct DeviceUsage {
  std::uint64_t bytes = 0;
  std::uint64_t ios = 0;
};

struct MetricsReport {
  std::vector<std::uint64_t> cache_hits;  // per level
  std::uint64_t cache_misses = 0;
  double cache_hit_rate = 0.0;
  std::uint64_t cache_promotions = 0;
  std::uint64_t cache_evictions = 0;
  std::uint64_t cache_writebacks = 0;
  std::uint64_t pinned_rows_high_water = 0;
  StoreStats store;
  double simulated_seconds = 0.0;
  double simulated_qps = 0.0;
  std::map<std::string, DeviceUsage> device_usage;        // by kind name
  std::map<std::string, double> device_effective_bw;      // bytes/s
  std::map<std::string, double> device_effective_iops;
  double platform_power_watts = 0.0;
  double energy_joules = 0.0;
  struct Endurance {
    std::string device;
    double projected_bytes_per_day = 0.0;
    bool pass = true;
    double excess_bytes_per_day = 0.0;
  };
  std::vector<Endurance> endurance;
};

// Flat per-table weight arrays; also the shape of run()'s final state.
using ModelState = std::vector<std::vector<Byte>>;

struct RunConfig {
  ModelSpec model;
  Placement placement;
  CacheHierarchyConfig cache;     // row_bytes adjusted per width class
  StoreConfig store;
  InitPolicy init;
  PipelineConfig pipeline;
  UpdateRule update;
  PlatformConfig platform;
  double compute_seconds_per_batch = 0.0;
};

struct RunResult {
  MetricsReport metrics;
  ModelState final_state;  // indexed like model.tables
};

// The canonical key order of a batch: tables in model order, indices in list
// order. Deferred-init draws are consumed in exactly this order, so the
// reference run can reproduce them without knowing the placement.
namespace detail {

struct RoutedBatch {
  std::vector<RowKey> block_keys;                      // through cache + store
  std::vector<std::pair<RowKey, DeviceKind>> byte_keys;  // direct regions
};

}  // namespace detail

class TrainRun {
 public:
  explicit TrainRun(const RunConfig& cfg, const Trace& trace)
      : cfg_(cfg), trace_(trace) {
    cfg_.model.validate();
    cfg_.platform.validate();
    auto violations = validate(cfg_.placement,
                               make_problem_for_validation());
    for (const auto& v : violations)
      throw std::invalid_argument("placement invalid: " + v);
    for (const auto& id : trace_.table_ids)
      table_order_.push_back(cfg_.model.table_index(id));

    queue_ = std::make_shared<ValueQueue>(cfg_.init.seed,
                                          cfg_.init.distribution,
                                          cfg_.init.queue_depth);
    route_tables();
    open_store();
    build_hierarchies();
    if (cfg_.init.mode == InitPolicy::Mode::PreInitialized) pre_initialize();
  }

  RunResult run() {
    const std::uint64_t n = trace_.batches.size();
    const std::uint32_t depth = cfg_.pipeline.depth < 1 ? 1 : cfg_.pipeline.depth;
    // Deterministic stage schedule: prefetch runs `depth` batches ahead of
    // train, which is exactly the pinning window the cache must absorb.
    for (std::uint64_t b = 0; b < n && b < depth; ++b) prefetch(b);
    for (std::uint64_t b = 0; b < n; ++b) {
      train(b);
      if (b + depth < n) prefetch(b + depth);
      finish_batch_cost();
    }
    if (store_) {
      for (auto& [w, h] : hierarchies_) h->flush_all(*store_);
      store_->flush();
    }
    // The final writeback flush is device traffic too.
    simulated_seconds_ += account_traffic();

    RunResult res;
    res.metrics = collect_metrics();
    res.final_state = collect_state();
    return res;
  }

 private:
  PlacementProblem make_problem_for_validation() const {
    std::vector<PlacementDevice> devs;
    for (const auto& d : cfg_.platform.devices)
      devs.push_back(PlacementDevice{d, d.capacity_bytes});
    return make_problem(cfg_.model, devs, cfg_.platform.gpu_count);
  }

  void route_tables() {
    byte_device_.assign(cfg_.model.tables.size(), std::nullopt);
    block_device_.assign(cfg_.model.tables.size(), std::nullopt);
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      const auto& a = cfg_.placement.assignment.at(cfg_.model.tables[ti].id);
      if (is_block_kind(a.device))
        block_device_[ti] = a.device;
      else
        byte_device_[ti] = a.device;
    }
  }

  void open_store() {
    // The store holds only block-placed tables; its model is the sub-model.
    // Deferred draws flow through the shared queue either way.
    ModelSpec sub;
    sub.target_qps = cfg_.model.target_qps;
    store_table_of_.assign(cfg_.model.tables.size(), UINT32_MAX);
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      if (!block_device_[ti]) continue;
      store_table_of_[ti] = static_cast<std::uint32_t>(sub.tables.size());
      sub.tables.push_back(cfg_.model.tables[ti]);
    }
    InitPolicy store_init = cfg_.init;
    store_init.mode = InitPolicy::Mode::Deferred;  // trainer drives init order
    if (!sub.tables.empty())
      store_ = std::make_unique<Store>(cfg_.store, sub, store_init, queue_);
    // Direct regions for byte-placed tables.
    regions_.resize(cfg_.model.tables.size());
    region_touched_.resize(cfg_.model.tables.size());
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      if (!byte_device_[ti]) continue;
      const auto& t = cfg_.model.tables[ti];
      regions_[ti].assign(t.rows * t.row_bytes(), Byte{0});
      region_touched_[ti].assign(t.rows, 0);
    }
  }

  void build_hierarchies() {
    // One hierarchy per row-width class among block-placed tables; each gets
    // the configured level capacities at that width.
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      if (!block_device_[ti]) continue;
      std::uint64_t width = cfg_.model.tables[ti].row_bytes();
      if (hierarchies_.count(width)) continue;
      CacheHierarchyConfig hc = cfg_.cache;
      for (auto& l : hc.levels) l.row_bytes = width;
      hierarchies_.emplace(width, std::make_unique<CacheHierarchy>(hc));
    }
  }

  void pre_initialize() {
    // Canonical order: tables in model order, rows ascending, one shared
    // draw sequence across store and regions.
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      const auto& t = cfg_.model.tables[ti];
      if (block_device_[ti]) {
        std::vector<RowKey> keys;
        keys.reserve(t.rows);
        for (std::uint64_t r = 0; r < t.rows; ++r)
          keys.push_back(RowKey{store_table_of_[ti], r});
        store_->ensure_rows(keys);
      } else {
        for (std::uint64_t r = 0; r < t.rows; ++r) ensure_region_row(ti, r);
      }
    }
  }

  void ensure_region_row(std::uint32_t ti, std::uint64_t row) {
    if (region_touched_[ti][row]) return;
    const auto& t = cfg_.model.tables[ti];
    std::vector<double> draws(t.row_elems());
    queue_->take(draws.size(), draws.data());
    Byte* out = regions_[ti].data() + row * t.row_bytes();
    for (std::uint32_t e = 0; e < t.row_elems(); ++e)
      encode_element(draws[e], static_cast<int>(t.precision_bytes),
                     out + static_cast<std::size_t>(e) * t.precision_bytes);
    region_touched_[ti][row] = 1;
  }

  detail::RoutedBatch route_batch(std::uint64_t b) const {
    detail::RoutedBatch rb;
    const TraceBatch& batch = trace_.batches[b];
    for (std::size_t pos = 0; pos < table_order_.size(); ++pos) {
      std::uint32_t ti = table_order_[pos];
      for (std::uint64_t idx : batch.lookups[pos]) {
        if (block_device_[ti])
          rb.block_keys.push_back(RowKey{ti, idx});
        else
          rb.byte_keys.emplace_back(RowKey{ti, idx}, *byte_device_[ti]);
      }
    }
    return rb;
  }

  RowKey to_store_key(const RowKey& k) const {
    return RowKey{store_table_of_[k.table], k.index};
  }

  // Prefetch stage: walk the batch in canonical order, materializing
  // first-touch rows (preserving the global draw order across store and
  // regions), then pin the block-placed rows in the cache.
  void prefetch(std::uint64_t b) {
    const TraceBatch& batch = trace_.batches[b];
    std::map<std::uint64_t, std::vector<RowKey>> per_width;
    for (std::size_t pos = 0; pos < table_order_.size(); ++pos) {
      std::uint32_t ti = table_order_[pos];
      if (block_device_[ti]) {
        std::vector<RowKey> skeys;
        skeys.reserve(batch.lookups[pos].size());
        for (std::uint64_t idx : batch.lookups[pos])
          skeys.push_back(RowKey{store_table_of_[ti], idx});
        if (cfg_.init.mode == InitPolicy::Mode::Deferred)
          store_->ensure_rows(skeys);
        auto& bucket = per_width[cfg_.model.tables[ti].row_bytes()];
        bucket.insert(bucket.end(), skeys.begin(), skeys.end());
      } else {
        if (cfg_.init.mode == InitPolicy::Mode::Deferred)
          for (std::uint64_t idx : batch.lookups[pos]) ensure_region_row(ti, idx);
      }
    }
    for (auto& [width, keys] : per_width)
      hierarchies_.at(width)->apply_batch(*store_, keys, b);
  }

  // Train stage: re-read pinned rows (forward), apply the update rule, write
  // back (backward), unpin. Byte-placed tables are read and updated in place.
  void train(std::uint64_t b) {
    const TraceBatch& batch = trace_.batches[b];
    std::map<std::uint64_t, std::vector<RowKey>> per_width;
    for (std::size_t pos = 0; pos < table_order_.size(); ++pos) {
      std::uint32_t ti = table_order_[pos];
      const TableSpec& t = cfg_.model.tables[ti];
      if (block_device_[ti]) {
        auto& bucket = per_width[t.row_bytes()];
        for (std::uint64_t idx : batch.lookups[pos])
          bucket.push_back(RowKey{store_table_of_[ti], idx});
      } else {
        for (std::uint64_t idx : batch.lookups[pos]) {
          Byte* row = regions_[ti].data() + idx * t.row_bytes();
          apply_update(cfg_.update, b, RowKey{ti, idx}, t, row);
          byte_traffic_[*byte_device_[ti]] += 2 * t.row_bytes();
        }
      }
    }
    for (auto& [width, keys] : per_width) {
      CacheHierarchy& h = *hierarchies_.at(width);
      auto rows = h.read_batch(keys, b);
      // Duplicate keys inside a batch chain their updates.
      std::unordered_map<RowKey, std::vector<Byte>, RowKeyHash> current;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        std::uint32_t model_ti = model_table_of_store(keys[i].table);
        auto [it, fresh] = current.try_emplace(keys[i], std::move(rows[i]));
        RowKey model_key{model_ti, keys[i].index};
        apply_update(cfg_.update, b, model_key, cfg_.model.tables[model_ti],
                     it->second.data());
        rows[i] = it->second;
      }
      h.write_batch(keys, rows, b);
      h.unpin(b);
    }
  }

  std::uint32_t model_table_of_store(std::uint32_t store_ti) const {
    for (std::uint32_t ti = 0; ti < store_table_of_.size(); ++ti)
      if (store_table_of_[ti] == store_ti) return ti;
    throw std::logic_error("unknown store table");
  }

  // Per-batch simulated time: devices serve their stage traffic in parallel,
  // so the batch costs the slowest device, floored by the fixed compute knob.
  void finish_batch_cost() {
    simulated_seconds_ +=
        std::max(cfg_.compute_seconds_per_batch, account_traffic());
  }

  // Folds traffic since the last call into the usage counters and returns the
  // slowest device's service time for it.
  double account_traffic() {
    double batch_time = 0.0;

    StoreStats ss = store_ ? store_->stats() : StoreStats{};
    std::uint64_t d_reads = ss.device_bytes_read - last_store_.device_bytes_read;
    std::uint64_t d_writes =
        ss.device_bytes_written - last_store_.device_bytes_written;
    std::uint64_t d_ios = (ss.read_ios - last_store_.read_ios) +
                          (ss.write_ios - last_store_.write_ios);
    last_store_ = ss;
    if (d_reads + d_writes > 0) {
      // Attribute store traffic across the block devices present, weighted
      // by how many block tables each one backs.
      double total_w = 0.0;
      std::map<DeviceKind, double> weight;
      for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti)
        if (block_device_[ti]) {
          weight[*block_device_[ti]] += 1.0;
          total_w += 1.0;
        }
      for (const auto& [kind, w] : weight) {
        const MemoryDevice* dev = cfg_.platform.find(kind);
        double frac = w / total_w;
        double bytes = frac * static_cast<double>(d_reads + d_writes);
        double ios = frac * static_cast<double>(d_ios);
        auto& usage = block_usage_[kind];
        usage.bytes += static_cast<std::uint64_t>(bytes);
        usage.ios += static_cast<std::uint64_t>(ios);
        batch_time = std::max(batch_time,
                              bytes / dev->bandwidth_bytes_per_s +
                                  ios * dev->latency_p50_ns * 1e-9);
      }
    }

    // Cache level traffic: level i of every hierarchy maps onto the device
    // named by the level config.
    std::vector<std::uint64_t> level_bytes(cfg_.cache.levels.size(), 0);
    for (auto& [w, h] : hierarchies_) {
      const CacheStats& cs = h->stats();
      for (std::size_t l = 0; l < cs.bytes_touched.size(); ++l)
        level_bytes[l] += cs.bytes_touched[l];
    }
    for (std::size_t l = 0; l < level_bytes.size(); ++l) {
      std::uint64_t delta = level_bytes[l] - last_level_bytes_[l];
      last_level_bytes_[l] = level_bytes[l];
      if (delta == 0) continue;
      DeviceKind kind = kind_from_name(cfg_.cache.levels[l].name);
      const MemoryDevice* dev = cfg_.platform.find(kind);
      byte_usage_[kind] += delta;
      if (dev)
        batch_time = std::max(batch_time,
                              static_cast<double>(delta) /
                                  dev->bandwidth_bytes_per_s);
    }

    // Direct-region traffic accumulated during this batch.
    for (auto& [kind, bytes] : byte_traffic_) {
      const MemoryDevice* dev = cfg_.platform.find(kind);
      byte_usage_[kind] += bytes;
      if (dev)
        batch_time = std::max(batch_time,
                              static_cast<double>(bytes) /
                                  dev->bandwidth_bytes_per_s);
    }
    byte_traffic_.clear();
    return batch_time;
  }

  MetricsReport collect_metrics() {
    MetricsReport m;
    m.cache_hits.assign(cfg_.cache.levels.size(), 0);
    std::uint64_t lookups = 0;
    for (auto& [w, h] : hierarchies_) {
      const CacheStats& cs = h->stats();
      for (std::size_t l = 0; l < cs.hits.size(); ++l) m.cache_hits[l] += cs.hits[l];
      m.cache_misses += cs.misses;
      m.cache_promotions += cs.promotions;
      m.cache_evictions += cs.evictions;
      m.cache_writebacks += cs.writebacks;
      m.pinned_rows_high_water =
          std::max(m.pinned_rows_high_water, cs.pinned_rows_high_water);
    }
    for (auto h : m.cache_hits) lookups += h;
    lookups += m.cache_misses;
    m.cache_hit_rate = lookups == 0
                           ? 0.0
                           : static_cast<double>(lookups - m.cache_misses) /
                                 static_cast<double>(lookups);
    if (store_) m.store = store_->stats();
    m.simulated_seconds = simulated_seconds_;
    std::uint64_t samples =
        trace_.batches.size() * static_cast<std::uint64_t>(trace_.batch_size);
    m.simulated_qps = simulated_seconds_ > 0.0
                          ? static_cast<double>(samples) / simulated_seconds_
                          : 0.0;

    for (const auto& [kind, usage] : block_usage_) {
      m.device_usage[kind_name(kind)] = usage;
      if (simulated_seconds_ > 0.0) {
        m.device_effective_bw[kind_name(kind)] =
            static_cast<double>(usage.bytes) / simulated_seconds_;
        m.device_effective_iops[kind_name(kind)] =
            static_cast<double>(usage.ios) / simulated_seconds_;
      }
    }
    for (const auto& [kind, bytes] : byte_usage_) {
      auto& u = m.device_usage[kind_name(kind)];
      u.bytes += bytes;
      if (simulated_seconds_ > 0.0)
        m.device_effective_bw[kind_name(kind)] =
            static_cast<double>(u.bytes) / simulated_seconds_;
    }

    double hbm_gbs = 0.0;
    auto hit = byte_usage_.find(DeviceKind::HBM);
    if (hit != byte_usage_.end() && simulated_seconds_ > 0.0)
      hbm_gbs = static_cast<double>(hit->second) / simulated_seconds_ / kGB;
    m.platform_power_watts = platform_power_watts(cfg_.platform, hbm_gbs);
    m.energy_joules = m.platform_power_watts * m.simulated_seconds;

    // Endurance: extrapolate the measured write volume to a full day at the
    // simulated QPS.
    for (const auto& [kind, usage] : block_usage_) {
      const MemoryDevice* dev = cfg_.platform.find(kind);
      if (!dev || !dev->endurance_bytes_per_day) continue;
      MetricsReport::Endurance e;
      e.device = kind_name(kind);
      std::uint64_t frac_writes = m.store.device_bytes_written;
      // Share of store writes for this device mirrors the usage attribution.
      double share = block_usage_.size() == 1
                         ? 1.0
                         : static_cast<double>(usage.bytes) /
                               std::max<double>(1.0, total_block_bytes());
      double per_day = simulated_seconds_ > 0.0
                           ? static_cast<double>(frac_writes) * share /
                                 simulated_seconds_ * 86400.0
                           : 0.0;
      e.projected_bytes_per_day = per_day;
      auto verdict = check_endurance(per_day, *dev);
      e.pass = verdict.pass;
      e.excess_bytes_per_day = verdict.excess_bytes_per_day;
      m.endurance.push_back(e);
    }
    return m;
  }

  double total_block_bytes() const {
    double t = 0.0;
    for (const auto& [k, u] : block_usage_) t += static_cast<double>(u.bytes);
    return t;
  }

  ModelState collect_state() {
    ModelState state(cfg_.model.tables.size());
    for (std::uint32_t ti = 0; ti < cfg_.model.tables.size(); ++ti) {
      const TableSpec& t = cfg_.model.tables[ti];
      if (byte_device_[ti]) {
        state[ti] = regions_[ti];
        continue;
      }
      state[ti].assign(t.rows * t.row_bytes(), Byte{0});
      std::vector<RowKey> keys;
      std::vector<std::uint64_t> rows_present;
      for (std::uint64_t r = 0; r < t.rows; ++r) {
        RowKey sk{store_table_of_[ti], r};
        if (store_->contains(sk)) {
          keys.push_back(sk);
          rows_present.push_back(r);
        }
      }
      auto rows = store_->multi_get(keys);
      for (std::size_t i = 0; i < keys.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(),
                  state[ti].begin() + rows_present[i] * t.row_bytes());
    }
    return state;
  }

  RunConfig cfg_;
  Trace trace_;
  std::vector<std::uint32_t> table_order_;  // trace position -> model index
  std::shared_ptr<ValueQueue> queue_;
  std::unique_ptr<Store> store_;
  std::vector<std::optional<DeviceKind>> byte_device_;
  std::vector<std::optional<DeviceKind>> block_device_;
  std::vector<std::uint32_t> store_table_of_;
  std::vector<std::vector<Byte>> regions_;
  std::vector<std::vector<char>> region_touched_;
  std::map<std::uint64_t, std::unique_ptr<CacheHierarchy>> hierarchies_;

  // cost accounting
  StoreStats last_store_;
  std::vector<std::uint64_t> last_level_bytes_ =
      std::vector<std::uint64_t>(16, 0);
  std::map<DeviceKind, std::uint64_t> byte_traffic_;
  std::map<DeviceKind, DeviceUsage> block_usage_;
  std::map<DeviceKind, std::uint64_t> byte_usage_;
  double simulated_seconds_ = 0.0;
};

inline RunResult run(const RunConfig& cfg, const Trace& trace) {
  TrainRun r(cfg, trace);
  return r.run();
}

// Independent oracle: flat arrays, identical draw order and update rule, no
// cache, no store, no pipeline.
inline ModelState reference_run(const ModelSpec& model, const Trace& trace,
                                const InitPolicy& init,
                                const UpdateRule& update) {
  model.validate();
  ModelState state(model.tables.size());
  std::vector<std::vector<char>> touched(model.tables.size());
  for (std::size_t ti = 0; ti < model.tables.size(); ++ti) {
    state[ti].assign(model.tables[ti].rows * model.tables[ti].row_bytes(),
                     Byte{0});
    touched[ti].assign(model.tables[ti].rows, 0);
  }
  std::uint64_t draw_index = 0;
  auto ensure = [&](std::uint32_t ti, std::uint64_t row) {
    if (touched[ti][row]) return;
    const TableSpec& t = model.tables[ti];
    Byte* out = state[ti].data() + row * t.row_bytes();
    for (std::uint32_t e = 0; e < t.row_elems(); ++e)
      encode_element(draw_value(init.seed, draw_index++, init.distribution),
                     static_cast<int>(t.precision_bytes),
                     out + static_cast<std::size_t>(e) * t.precision_bytes);
    touched[ti][row] = 1;
  };
  std::vector<std::uint32_t> order;
  for (const auto& id : trace.table_ids) order.push_back(model.table_index(id));

  if (init.mode == InitPolicy::Mode::PreInitialized) {
    for (std::uint32_t ti = 0; ti < model.tables.size(); ++ti)
      for (std::uint64_t r = 0; r < model.tables[ti].rows; ++r) ensure(ti, r);
  }
  for (std::uint64_t b = 0; b < trace.batches.size(); ++b) {
    const TraceBatch& batch = trace.batches[b];
    // First-touch inits in canonical order, then updates in the same order.
    for (std::size_t pos = 0; pos < order.size(); ++pos)
      for (std::uint64_t idx : batch.lookups[pos]) ensure(order[pos], idx);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      std::uint32_t ti = order[pos];
      const TableSpec& t = model.tables[ti];
      for (std::uint64_t idx : batch.lookups[pos])
        apply_update(update, b, RowKey{ti, idx}, t,
                     state[ti].data() + idx * t.row_bytes());
    }
  }
  return state;
}

// ---- report serialization ---------------------------------------------------

inline nlohmann::json report_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["cache"] = {
      {"hits", m.cache_hits},          {"misses", m.cache_misses},
      {"hit_rate", m.cache_hit_rate},  {"promotions", m.cache_promotions},
      {"evictions", m.cache_evictions},{"writebacks", m.cache_writebacks},
      {"pinned_rows_high_water", m.pinned_rows_high_water},
  };
  j["store"] = {
      {"device_bytes_written", m.store.device_bytes_written},
      {"device_bytes_read", m.store.device_bytes_read},
      {"read_ios", m.store.read_ios},
      {"write_ios", m.store.write_ios},
      {"live_rows", m.store.live_rows},
      {"total_file_bytes", m.store.total_file_bytes},
      {"compactions_run", m.store.compactions_run},
      {"deferred_inits", m.store.deferred_inits},
  };
  j["simulated_seconds"] = m.simulated_seconds;
  j["simulated_qps"] = m.simulated_qps;
  nlohmann::json devices = nlohmann::json::object();
  for (const auto& [name, u] : m.device_usage) {
    devices[name] = {{"bytes", u.bytes}, {"ios", u.ios}};
    auto bw = m.device_effective_bw.find(name);
    if (bw != m.device_effective_bw.end())
      devices[name]["effective_bw_bytes_per_s"] = bw->second;
    auto io = m.device_effective_iops.find(name);
    if (io != m.device_effective_iops.end())
      devices[name]["effective_iops"] = io->second;
  }
  j["devices"] = devices;
  j["platform_power_watts"] = m.platform_power_watts;
  j["energy_joules"] = m.energy_joules;
  nlohmann::json endurance = nlohmann::json::array();
  for (const auto& e : m.endurance)
    endurance.push_back({{"device", e.device},
                         {"projected_bytes_per_day", e.projected_bytes_per_day},
                         {"pass", e.pass},
                         {"excess_bytes_per_day", e.excess_bytes_per_day}});
  j["endurance"] = endurance;
  return j;
}

// Flat metric,value rows in stable order.
inline std::string report_to_csv(const MetricsReport& m) {
  std::ostringstream os;
  os << "metric,value\n";
  for (std::size_t l = 0; l < m.cache_hits.size(); ++l)
    os << "cache_hits_l" << l << ',' << m.cache_hits[l] << '\n';
  os << "cache_misses," << m.cache_misses << '\n'
     << "cache_hit_rate," << m.cache_hit_rate << '\n'
     << "cache_promotions," << m.cache_promotions << '\n'
     << "cache_evictions," << m.cache_evictions << '\n'
     << "cache_writebacks," << m.cache_writebacks << '\n'
     << "pinned_rows_high_water," << m.pinned_rows_high_water << '\n'
     << "store_device_bytes_written," << m.store.device_bytes_written << '\n'
     << "store_device_bytes_read," << m.store.device_bytes_read << '\n'
     << "store_read_ios," << m.store.read_ios << '\n'
     << "store_write_ios," << m.store.write_ios << '\n'
     << "store_live_rows," << m.store.live_rows << '\n'
     << "store_total_file_bytes," << m.store.total_file_bytes << '\n'
     << "store_compactions_run," << m.store.compactions_run << '\n'
     << "store_deferred_inits," << m.store.deferred_inits << '\n'
     << "simulated_seconds," << m.simulated_seconds << '\n'
     << "simulated_qps," << m.simulated_qps << '\n';
  for (const auto& [name, u] : m.device_usage) {
    os << "device_" << name << "_bytes," << u.bytes << '\n';
    os << "device_" << name << "_ios," << u.ios << '\n';
  }
  os << "platform_power_watts," << m.platform_power_watts << '\n'
     << "energy_joules," << m.energy_joules << '\n';
  for (const auto& e : m.endurance)
    os << "endurance_" << e.device << "_pass," << (e.pass ? 1 : 0) << '\n';
  return os.str();
}

enum class ReportFormat { Json, Csv };

inline void report_write(const MetricsReport& m, const std::string& path,
                         ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report for write: " + path);
  if (format == ReportFormat::Json)
    out << report_to_json(m).dump(2) << '\n';
  else
    out << report_to_csv(m);
  if (!out) throw std::runtime_error("report write failed: " + path);
}

inline MetricsReport report_read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  MetricsReport m;
  m.cache_hits = j.at("cache").at("hits").get<std::vector<std::uint64_t>>();
  m.cache_misses = j.at("cache").at("misses");
  m.cache_hit_rate = j.at("cache").at("hit_rate");
  m.cache_promotions = j.at("cache").at("promotions");
  m.cache_evictions = j.at("cache").at("evictions");
  m.cache_writebacks = j.at("cache").at("writebacks");
  m.pinned_rows_high_water = j.at("cache").at("pinned_rows_high_water");
  const auto& s = j.at("store");
  m.store.device_bytes_written = s.at("device_bytes_written");
  m.store.device_bytes_read = s.at("device_bytes_read");
  m.store.read_ios = s.at("read_ios");
  m.store.write_ios = s.at("write_ios");
  m.store.live_rows = s.at("live_rows");
  m.store.total_file_bytes = s.at("total_file_bytes");
  m.store.compactions_run = s.at("compactions_run");
  m.store.deferred_inits = s.at("deferred_inits");
  m.simulated_seconds = j.at("simulated_seconds");
  m.simulated_qps = j.at("simulated_qps");
  m.platform_power_watts = j.at("platform_power_watts");
  m.energy_joules = j.at("energy_joules");
  return m;
}

}  // namespace embsim
