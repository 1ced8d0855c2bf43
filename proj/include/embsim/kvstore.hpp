#pragma once

// Sharded, log-structured, block-addressed key-value store for embedding
// rows. Writes buffer in a per-shard memtable and flush as whole blocks into
// immutable segment files; per-shard compaction rewrites live rows and bounds
// space amplification. Rows absent under deferred initialization are
// materialized on first read from a background-filled queue of draws.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <optional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "embsim/common.hpp"
#include "embsim/model.hpp"

namespace embsim {

struct RowKey {
  std::uint32_t table = 0;  // index into ModelSpec::tables
  std::uint64_t index = 0;

  bool operator==(const RowKey&) const = default;
};

struct RowKeyHash {
  std::size_t operator()(const RowKey& k) const {
    return static_cast<std::size_t>(
        mix64(k.index, 0x7ab1e0000ULL + k.table));
  }
};

struct StoreConfig {
  std::uint32_t shard_count = 1;
  std::uint32_t block_bytes = 4096;
  std::uint64_t memtable_bytes = 1 << 20;
  std::uint32_t compaction_trigger = 8;  // immutable segments per shard
  bool compaction_stagger = false;
  std::string data_dir;

  void validate() const {
    if (shard_count < 1) throw std::invalid_argument("shard_count must be >= 1");
    if (block_bytes < 512 || (block_bytes & (block_bytes - 1)) != 0)
      throw std::invalid_argument("block_bytes must be a power of two >= 512");
    if (memtable_bytes < 1)
      throw std::invalid_argument("memtable_bytes must be positive");
    if (compaction_trigger < 1)
      throw std::invalid_argument("compaction_trigger must be positive");
    if (data_dir.empty()) throw std::invalid_argument("data_dir empty");
  }
};

struct InitPolicy {
  enum class Mode { PreInitialized, Deferred };
  Mode mode = Mode::Deferred;
  ValueDistribution distribution;
  std::uint64_t seed = 0;
  std::uint32_t queue_depth = 1024;
};

struct StoreStats {
  std::uint64_t device_bytes_written = 0;
  std::uint64_t device_bytes_read = 0;
  std::uint64_t read_ios = 0;
  std::uint64_t write_ios = 0;
  std::uint64_t live_rows = 0;
  std::uint64_t total_file_bytes = 0;
  std::uint64_t compactions_run = 0;
  std::uint64_t deferred_inits = 0;
};

class Store {
 public:
  // Opens (or reopens) the store. Pre-initialized mode materializes every row
  // of every table before returning; deferred materializes none. A shared
  // value queue may be injected so several consumers draw from one sequence.
  Store(StoreConfig config, ModelSpec model, InitPolicy init,
        std::shared_ptr<ValueQueue> shared_queue = nullptr)
      : config_(std::move(config)), model_(std::move(model)), init_(init) {
    config_.validate();
    model_.validate();
    queue_ = shared_queue
                 ? std::move(shared_queue)
                 : std::make_shared<ValueQueue>(init_.seed, init_.distribution,
                                                init_.queue_depth);
    namespace fs = std::filesystem;
    fs::create_directories(config_.data_dir);
    bool existing = fs::exists(manifest_path());
    shards_.resize(config_.shard_count);
    for (std::uint32_t s = 0; s < config_.shard_count; ++s) {
      shards_[s].dir = fs::path(config_.data_dir) / ("shard-" + std::to_string(s));
      fs::create_directories(shards_[s].dir);
    }
    if (existing) {
      load_manifest();
      rebuild_index();
    } else {
      write_manifest();
      if (init_.mode == InitPolicy::Mode::PreInitialized) {
        for (std::uint32_t ti = 0; ti < model_.tables.size(); ++ti)
          for (std::uint64_t r = 0; r < model_.tables[ti].rows; ++r)
            materialize_locked(RowKey{ti, r});
      }
    }
  }

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const ModelSpec& model() const { return model_; }
  const StoreConfig& config() const { return config_; }

  // Rows returned in request order. Under deferred init, absent keys are
  // materialized on the spot, in request order, and persisted.
  std::vector<std::vector<Byte>> multi_get(const std::vector<RowKey>& keys) {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::vector<Byte>> out;
    out.reserve(keys.size());
    for (const RowKey& key : keys) out.push_back(get_locked(key));
    return out;
  }

  void multi_set(const std::vector<RowKey>& keys,
                 const std::vector<std::vector<Byte>>& rows) {
    if (keys.size() != rows.size())
      throw std::invalid_argument("multi_set: keys/rows length mismatch");
    std::lock_guard<std::mutex> lk(mu_);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      check_bounds(keys[i]);
      if (rows[i].size() != row_bytes(keys[i]))
        throw std::invalid_argument("multi_set: row width mismatch for table " +
                                    model_.tables[keys[i].table].id);
      put_locked(keys[i], rows[i]);
    }
  }

  // Materializes any not-yet-present keys (in order) without reading them.
  void ensure_rows(const std::vector<RowKey>& keys) {
    std::lock_guard<std::mutex> lk(mu_);
    for (const RowKey& key : keys) {
      check_bounds(key);
      if (!contains_locked(key)) materialize_locked(key);
    }
  }

  bool contains(const RowKey& key) {
    std::lock_guard<std::mutex> lk(mu_);
    return contains_locked(key);
  }

  // Rewrites live rows of one shard (or all) into fresh segments.
  void compact(std::optional<std::uint32_t> shard = std::nullopt) {
    std::lock_guard<std::mutex> lk(mu_);
    if (shard) {
      if (*shard >= shards_.size())
        throw std::out_of_range("compact: bad shard id");
      compact_locked(*shard);
    } else {
      for (std::uint32_t s = 0; s < shards_.size(); ++s) compact_locked(s);
    }
  }

  // Flushes every shard memtable to segments.
  void flush() {
    std::lock_guard<std::mutex> lk(mu_);
    for (std::uint32_t s = 0; s < shards_.size(); ++s) flush_locked(s);
  }

  StoreStats stats() {
    std::lock_guard<std::mutex> lk(mu_);
    StoreStats snap = stats_;
    snap.live_rows = 0;
    snap.total_file_bytes = 0;
    for (const auto& sh : shards_) {
      snap.live_rows += count_live(sh);
      for (const auto& seg : sh.segments) snap.total_file_bytes += seg.file_bytes;
    }
    return snap;
  }

  // Live bytes currently addressable (memtable + index), for amplification
  // accounting.
  std::uint64_t live_bytes() {
    std::lock_guard<std::mutex> lk(mu_);
    std::uint64_t total = 0;
    for (const auto& sh : shards_) {
      for (const auto& e : sh.index) total += row_bytes(e.first);
      for (const auto& e : sh.memtable)
        if (!sh.index.count(e.first)) total += e.second.size();
    }
    return total;
  }

  static std::uint32_t shard_of(const RowKey& key, std::uint32_t shard_count) {
    return static_cast<std::uint32_t>(RowKeyHash{}(key) % shard_count);
  }

 private:
  struct Segment {
    std::uint64_t id = 0;
    std::uint64_t file_bytes = 0;
  };

  struct Shard {
    std::filesystem::path dir;
    std::unordered_map<RowKey, std::vector<Byte>, RowKeyHash> memtable;
    std::uint64_t memtable_used = 0;
    std::vector<Segment> segments;
    // key -> (segment id, payload offset)
    std::unordered_map<RowKey, std::pair<std::uint64_t, std::uint64_t>,
                       RowKeyHash>
        index;
    std::uint64_t next_segment = 0;
  };

  static constexpr std::uint32_t kPadTable = 0xFFFFFFFFu;
  static constexpr std::size_t kRecordHeader = 12;  // u32 table + u64 index

  std::filesystem::path manifest_path() const {
    return std::filesystem::path(config_.data_dir) / "manifest.json";
  }

  std::uint64_t row_bytes(const RowKey& key) const {
    return model_.tables[key.table].row_bytes();
  }

  void check_bounds(const RowKey& key) const {
    if (key.table >= model_.tables.size())
      throw std::out_of_range("row key names unknown table");
    if (key.index >= model_.tables[key.table].rows)
      throw std::out_of_range("row index out of bounds for table " +
                              model_.tables[key.table].id);
  }

  void write_manifest() const {
    nlohmann::json m = {
        {"version", 1},
        {"shard_count", config_.shard_count},
        {"block_bytes", config_.block_bytes},
        {"model_hash", model_.hash()},
        {"init_mode",
         init_.mode == InitPolicy::Mode::Deferred ? "DEFERRED" : "PRE_INITIALIZED"},
        {"init_seed", init_.seed},
    };
    std::ofstream out(manifest_path());
    if (!out) throw std::runtime_error("cannot write manifest");
    out << m.dump(2) << '\n';
  }

  void load_manifest() const {
    std::ifstream in(manifest_path());
    if (!in) throw std::runtime_error("cannot read manifest");
    nlohmann::json m = nlohmann::json::parse(in);
    if (m.at("version") != 1) throw std::runtime_error("manifest version mismatch");
    if (m.at("shard_count") != config_.shard_count ||
        m.at("block_bytes") != config_.block_bytes)
      throw std::runtime_error("store reopened with mismatched config");
    if (m.at("model_hash") != model_.hash())
      throw std::runtime_error("store reopened with mismatched model");
    std::string mode = m.at("init_mode");
    std::string want =
        init_.mode == InitPolicy::Mode::Deferred ? "DEFERRED" : "PRE_INITIALIZED";
    if (mode != want || m.at("init_seed") != init_.seed)
      throw std::runtime_error("store reopened with mismatched init policy");
  }

  void rebuild_index() {
    for (auto& sh : shards_) {
      std::vector<std::uint64_t> ids;
      for (const auto& entry : std::filesystem::directory_iterator(sh.dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("segment-", 0) == 0)
          ids.push_back(std::stoull(name.substr(8)));
      }
      std::sort(ids.begin(), ids.end());
      for (std::uint64_t id : ids) {
        Segment seg{id, std::filesystem::file_size(segment_path(sh, id))};
        scan_segment(sh, seg);
        sh.segments.push_back(seg);
        sh.next_segment = std::max(sh.next_segment, id + 1);
      }
    }
  }

  std::filesystem::path segment_path(const Shard& sh, std::uint64_t id) const {
    return sh.dir / ("segment-" + std::to_string(id));
  }

  void scan_segment(Shard& sh, const Segment& seg) {
    std::ifstream in(segment_path(sh, seg.id), std::ios::binary);
    if (!in) throw std::runtime_error("cannot open segment for scan");
    std::vector<Byte> data(seg.file_bytes);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
    std::size_t pos = 0;
    while (pos + kRecordHeader <= data.size()) {
      std::uint32_t table;
      std::memcpy(&table, data.data() + pos, 4);
      if (table == kPadTable) break;  // padding: rest of file is tail fill
      std::uint64_t index;
      std::memcpy(&index, data.data() + pos + 4, 8);
      RowKey key{table, index};
      check_bounds(key);
      std::uint64_t width = row_bytes(key);
      if (pos + kRecordHeader + width > data.size())
        throw std::runtime_error("truncated segment record");
      sh.index[key] = {seg.id, pos + kRecordHeader};
      pos += kRecordHeader + width;
    }
  }

  bool contains_locked(const RowKey& key) const {
    const Shard& sh = shards_[shard_of(key, config_.shard_count)];
    return sh.memtable.count(key) != 0 || sh.index.count(key) != 0;
  }

  std::uint64_t count_live(const Shard& sh) const {
    std::uint64_t n = sh.index.size();
    for (const auto& e : sh.memtable)
      if (!sh.index.count(e.first)) ++n;
    return n;
  }

  // Draws a freshly initialized row from the shared queue and persists it.
  void materialize_locked(const RowKey& key) {
    const TableSpec& t = model_.tables[key.table];
    std::vector<double> draws(t.row_elems());
    queue_->take(draws.size(), draws.data());
    std::vector<Byte> row(t.row_bytes());
    for (std::uint32_t e = 0; e < t.row_elems(); ++e)
      encode_element(draws[e], static_cast<int>(t.precision_bytes),
                     row.data() + static_cast<std::size_t>(e) * t.precision_bytes);
    put_locked(key, row);
    if (init_.mode == InitPolicy::Mode::Deferred) ++stats_.deferred_inits;
  }

  std::vector<Byte> get_locked(const RowKey& key) {
    check_bounds(key);
    Shard& sh = shards_[shard_of(key, config_.shard_count)];
    auto mit = sh.memtable.find(key);
    if (mit != sh.memtable.end()) return mit->second;
    auto iit = sh.index.find(key);
    if (iit == sh.index.end()) {
      if (init_.mode != InitPolicy::Mode::Deferred)
        throw std::runtime_error("row missing from pre-initialized store");
      materialize_locked(key);
      return sh.memtable.at(key);
    }
    return read_record(sh, iit->second, row_bytes(key));
  }

  std::vector<Byte> read_record(Shard& sh,
                                const std::pair<std::uint64_t, std::uint64_t>& loc,
                                std::uint64_t width) {
    std::ifstream in(segment_path(sh, loc.first), std::ios::binary);
    if (!in) throw std::runtime_error("cannot open segment for read");
    in.seekg(static_cast<std::streamoff>(loc.second));
    std::vector<Byte> row(width);
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(width));
    if (!in) throw std::runtime_error("short segment read");
    // Device-level accounting: whole blocks are transferred per request.
    std::uint64_t first_block = loc.second / config_.block_bytes;
    std::uint64_t last_block = (loc.second + width - 1) / config_.block_bytes;
    stats_.device_bytes_read += (last_block - first_block + 1) * config_.block_bytes;
    ++stats_.read_ios;
    return row;
  }

  void put_locked(const RowKey& key, const std::vector<Byte>& row) {
    std::uint32_t s = shard_of(key, config_.shard_count);
    Shard& sh = shards_[s];
    std::uint64_t rec = kRecordHeader + row.size();
    auto it = sh.memtable.find(key);
    if (it == sh.memtable.end() && sh.memtable_used + rec > config_.memtable_bytes)
      flush_locked(s);
    auto [mit, inserted] = sh.memtable.insert_or_assign(key, row);
    (void)mit;
    if (inserted) sh.memtable_used += rec;
  }

  std::uint32_t effective_trigger(std::uint32_t shard) const {
    if (!config_.compaction_stagger) return config_.compaction_trigger;
    // Phase-offset the shards so they do not all compact on the same flush.
    return config_.compaction_trigger + shard % config_.compaction_trigger;
  }

  void flush_locked(std::uint32_t s) {
    Shard& sh = shards_[s];
    if (sh.memtable.empty()) return;
    // Deterministic on-disk order.
    std::vector<const RowKey*> keys;
    keys.reserve(sh.memtable.size());
    for (const auto& e : sh.memtable) keys.push_back(&e.first);
    std::sort(keys.begin(), keys.end(), [](const RowKey* a, const RowKey* b) {
      return a->table != b->table ? a->table < b->table : a->index < b->index;
    });
    std::vector<Byte> buf;
    std::vector<std::pair<RowKey, std::uint64_t>> offsets;
    for (const RowKey* k : keys) {
      const auto& row = sh.memtable.at(*k);
      std::size_t pos = buf.size();
      buf.resize(pos + kRecordHeader + row.size());
      std::memcpy(buf.data() + pos, &k->table, 4);
      std::memcpy(buf.data() + pos + 4, &k->index, 8);
      std::memcpy(buf.data() + pos + kRecordHeader, row.data(), row.size());
      offsets.emplace_back(*k, pos + kRecordHeader);
    }
    std::size_t padded =
        (buf.size() + config_.block_bytes - 1) / config_.block_bytes *
        config_.block_bytes;
    buf.resize(padded, Byte{0xFF});
    std::uint64_t id = sh.next_segment++;
    {
      std::ofstream out(segment_path(sh, id), std::ios::binary);
      if (!out) throw std::runtime_error("cannot write segment in shard " +
                                         std::to_string(s));
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
      if (!out) throw std::runtime_error("segment write failed in shard " +
                                         std::to_string(s));
    }
    for (const auto& [k, off] : offsets) sh.index[k] = {id, off};
    sh.segments.push_back(Segment{id, padded});
    sh.memtable.clear();
    sh.memtable_used = 0;
    stats_.device_bytes_written += padded;
    stats_.write_ios += padded / config_.block_bytes;
    if (sh.segments.size() >= effective_trigger(s)) compact_locked(s);
  }

  void compact_locked(std::uint32_t s) {
    Shard& sh = shards_[s];
    if (sh.segments.empty() && sh.memtable.empty()) return;
    bool had_segments = sh.segments.size() > 0;
    if (sh.segments.size() <= 1 && sh.memtable.empty()) return;  // nothing to fold
    // Collect live rows: memtable wins over segments.
    std::vector<std::pair<RowKey, std::vector<Byte>>> live;
    for (const auto& e : sh.index) {
      if (sh.memtable.count(e.first)) continue;
      live.emplace_back(e.first, read_record_quiet(sh, e.second, row_bytes(e.first)));
    }
    for (const auto& e : sh.memtable) live.emplace_back(e.first, e.second);
    std::sort(live.begin(), live.end(), [](const auto& a, const auto& b) {
      return a.first.table != b.first.table ? a.first.table < b.first.table
                                            : a.first.index < b.first.index;
    });
    // Rewrite into a single fresh segment.
    std::vector<Byte> buf;
    std::vector<std::pair<RowKey, std::uint64_t>> offsets;
    for (const auto& [k, row] : live) {
      std::size_t pos = buf.size();
      buf.resize(pos + kRecordHeader + row.size());
      std::memcpy(buf.data() + pos, &k.table, 4);
      std::memcpy(buf.data() + pos + 4, &k.index, 8);
      std::memcpy(buf.data() + pos + kRecordHeader, row.data(), row.size());
      offsets.emplace_back(k, pos + kRecordHeader);
    }
    std::size_t padded =
        buf.empty() ? 0
                    : (buf.size() + config_.block_bytes - 1) /
                          config_.block_bytes * config_.block_bytes;
    buf.resize(padded, Byte{0xFF});
    for (const auto& seg : sh.segments)
      std::filesystem::remove(segment_path(sh, seg.id));
    sh.segments.clear();
    sh.index.clear();
    sh.memtable.clear();
    sh.memtable_used = 0;
    if (padded > 0) {
      std::uint64_t id = sh.next_segment++;
      std::ofstream out(segment_path(sh, id), std::ios::binary);
      if (!out) throw std::runtime_error("compaction write failed in shard " +
                                         std::to_string(s));
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
      if (!out) throw std::runtime_error("compaction write failed in shard " +
                                         std::to_string(s));
      for (const auto& [k, off] : offsets) sh.index[k] = {id, off};
      sh.segments.push_back(Segment{id, padded});
      stats_.device_bytes_written += padded;
      stats_.write_ios += padded / config_.block_bytes;
    }
    if (had_segments) ++stats_.compactions_run;
  }

  // Compaction-internal read: no device accounting (rewrite traffic is
  // charged on the write side).
  std::vector<Byte> read_record_quiet(
      Shard& sh, const std::pair<std::uint64_t, std::uint64_t>& loc,
      std::uint64_t width) {
    std::ifstream in(segment_path(sh, loc.first), std::ios::binary);
    if (!in) throw std::runtime_error("cannot open segment for read");
    in.seekg(static_cast<std::streamoff>(loc.second));
    std::vector<Byte> row(width);
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(width));
    if (!in) throw std::runtime_error("short segment read");
    return row;
  }

  StoreConfig config_;
  ModelSpec model_;
  InitPolicy init_;
  std::shared_ptr<ValueQueue> queue_;
  std::vector<Shard> shards_;
  StoreStats stats_;
  std::mutex mu_;
};

}  // namespace embsim
