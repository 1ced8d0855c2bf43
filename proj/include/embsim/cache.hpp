#pragma once

// Multi-level exclusive cache over the kvstore: tags, timestamp states,
// pinning, LRU/LFU victim selection, batched lookup grouping, promotion and
// dirty writeback. A key resides in at most one level at any quiescent point.

#include <cassert>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "embsim/kvstore.hpp"

namespace embsim {

struct CacheLevelConfig {
  std::string name;
  std::uint64_t capacity_rows = 1;
  std::uint64_t row_bytes = 0;

  void validate() const {
    if (capacity_rows < 1)
      throw std::invalid_argument("cache level capacity_rows must be >= 1");
    if (row_bytes < 1)
      throw std::invalid_argument("cache level row_bytes must be >= 1");
  }
};

enum class CachePolicy { LRU, LFU };

struct CacheHierarchyConfig {
  std::vector<CacheLevelConfig> levels;  // level 0 is fastest
  CachePolicy policy = CachePolicy::LRU;

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("cache needs >= 1 level");
    for (const auto& l : levels) l.validate();
    for (std::size_t i = 1; i < levels.size(); ++i)
      if (levels[i].row_bytes != levels[0].row_bytes)
        throw std::invalid_argument("all cache levels must share row_bytes");
  }
};

struct LookupPartition {
  // hits[level] and misses preserve request order within themselves;
  // every requested key lands in exactly one list.
  std::vector<std::vector<RowKey>> hits;
  std::vector<RowKey> misses;
};

struct CacheStats {
  std::vector<std::uint64_t> hits;  // per level
  std::uint64_t misses = 0;
  std::uint64_t promotions = 0;
  std::uint64_t evictions = 0;
  std::uint64_t writebacks = 0;
  std::uint64_t pinned_rows_high_water = 0;
  std::vector<std::uint64_t> bytes_touched;  // per level, for cost models

  std::uint64_t total_hits() const {
    std::uint64_t t = 0;
    for (auto h : hits) t += h;
    return t;
  }
};

class CapacityDeadlock : public std::runtime_error {
 public:
  explicit CapacityDeadlock(const std::string& what)
      : std::runtime_error(what) {}
};

class CacheHierarchy {
 public:
  explicit CacheHierarchy(CacheHierarchyConfig config)
      : config_(std::move(config)) {
    config_.validate();
    levels_.reserve(config_.levels.size());
    for (const auto& lc : config_.levels) levels_.emplace_back(lc);
    stats_.hits.assign(levels_.size(), 0);
    stats_.bytes_touched.assign(levels_.size(), 0);
  }

  const CacheHierarchyConfig& config() const { return config_; }
  const CacheStats& stats() const { return stats_; }

  // Pure classification; duplicates resolve identically, no state changes.
  LookupPartition lookup_group(const std::vector<RowKey>& keys) const {
    LookupPartition part;
    part.hits.resize(levels_.size());
    for (const RowKey& key : keys) {
      bool found = false;
      for (std::size_t l = 0; l < levels_.size(); ++l) {
        if (levels_[l].slot_of.count(key)) {
          part.hits[l].push_back(key);
          found = true;
          break;
        }
      }
      if (!found) part.misses.push_back(key);
    }
    return part;
  }

  // Fetches misses from the store, promotes lower-level hits, pins every
  // requested key to batch_id and returns rows in request order. Post-state:
  // all requested keys reside in level 0.
  std::vector<std::vector<Byte>> apply_batch(Store& store,
                                             const std::vector<RowKey>& keys,
                                             std::uint64_t batch_id) {
    LookupPartition part = lookup_group(keys);
    stats_.misses += part.misses.size();
    for (std::size_t l = 0; l < levels_.size(); ++l)
      stats_.hits[l] += part.hits[l].size();

    // Batched fetch; duplicate misses materialize once inside the store.
    std::vector<RowKey> unique_misses;
    std::unordered_set<RowKey, RowKeyHash> seen;
    for (const RowKey& k : part.misses)
      if (seen.insert(k).second) unique_misses.push_back(k);
    std::unordered_map<RowKey, std::vector<Byte>, RowKeyHash> fetched;
    if (!unique_misses.empty()) {
      auto rows = store.multi_get(unique_misses);
      for (std::size_t i = 0; i < unique_misses.size(); ++i)
        fetched.emplace(unique_misses[i], std::move(rows[i]));
    }

    auto& pin_set = batch_pins_[batch_id];
    std::vector<std::vector<Byte>> out;
    out.reserve(keys.size());
    for (const RowKey& key : keys) {
      ensure_in_l0(store, key, fetched);
      Level& l0 = levels_[0];
      std::uint64_t slot = l0.slot_of.at(key);
      Entry& e = l0.entries[slot];
      touch(l0, slot);
      stats_.bytes_touched[0] += l0.cfg.row_bytes;
      if (pin_set.insert(key).second) {
        ++e.pin_count;
        ++pinned_rows_;
        stats_.pinned_rows_high_water =
            std::max<std::uint64_t>(stats_.pinned_rows_high_water, pinned_rows_);
      }
      out.emplace_back(l0.data.begin() + slot * l0.cfg.row_bytes,
                       l0.data.begin() + (slot + 1) * l0.cfg.row_bytes);
    }
    return out;
  }

  // Re-reads rows previously pinned by apply_batch(batch_id).
  std::vector<std::vector<Byte>> read_batch(const std::vector<RowKey>& keys,
                                            std::uint64_t batch_id) {
    const auto pit = batch_pins_.find(batch_id);
    if (pit == batch_pins_.end())
      throw std::invalid_argument("read_batch: unknown batch");
    std::vector<std::vector<Byte>> out;
    out.reserve(keys.size());
    for (const RowKey& key : keys) {
      auto [level, slot] = locate_pinned(key, pit->second, "read_batch");
      Level& lv = levels_[level];
      touch(lv, slot);
      stats_.bytes_touched[level] += lv.cfg.row_bytes;
      out.emplace_back(lv.data.begin() + slot * lv.cfg.row_bytes,
                       lv.data.begin() + (slot + 1) * lv.cfg.row_bytes);
    }
    return out;
  }

  // Updates cached copies and marks them dirty; the store is untouched until
  // eviction or flush. Keys must be cached and pinned by batch_id.
  void write_batch(const std::vector<RowKey>& keys,
                   const std::vector<std::vector<Byte>>& rows,
                   std::uint64_t batch_id) {
    if (keys.size() != rows.size())
      throw std::invalid_argument("write_batch: keys/rows length mismatch");
    const auto pit = batch_pins_.find(batch_id);
    if (pit == batch_pins_.end())
      throw std::invalid_argument("write_batch: unknown batch");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      auto [level, slot] = locate_pinned(keys[i], pit->second, "write_batch");
      Level& lv = levels_[level];
      if (rows[i].size() != lv.cfg.row_bytes)
        throw std::invalid_argument("write_batch: row width mismatch");
      std::copy(rows[i].begin(), rows[i].end(),
                lv.data.begin() + slot * lv.cfg.row_bytes);
      lv.entries[slot].dirty = true;
      touch(lv, slot);
      stats_.bytes_touched[level] += lv.cfg.row_bytes;
    }
  }

  // Releases batch_id's pins; keys pinned by other in-flight batches stay
  // pinned. Unknown batch ids are a no-op.
  void unpin(std::uint64_t batch_id) {
    auto it = batch_pins_.find(batch_id);
    if (it == batch_pins_.end()) return;
    for (const RowKey& key : it->second) {
      for (auto& lv : levels_) {
        auto sit = lv.slot_of.find(key);
        if (sit != lv.slot_of.end()) {
          Entry& e = lv.entries[sit->second];
          assert(e.pin_count > 0);
          --e.pin_count;
          --pinned_rows_;
          break;
        }
      }
    }
    batch_pins_.erase(it);
  }

  // Writes every dirty entry back to the store. Requires no outstanding pins.
  void flush_all(Store& store) {
    if (!batch_pins_.empty())
      throw std::logic_error("flush_all with pinned batches outstanding");
    std::vector<RowKey> keys;
    std::vector<std::vector<Byte>> rows;
    for (auto& lv : levels_) {
      for (auto& [key, slot] : lv.slot_of) {
        Entry& e = lv.entries[slot];
        if (!e.dirty) continue;
        keys.push_back(key);
        rows.emplace_back(lv.data.begin() + slot * lv.cfg.row_bytes,
                          lv.data.begin() + (slot + 1) * lv.cfg.row_bytes);
        e.dirty = false;
      }
    }
    if (!keys.empty()) {
      store.multi_set(keys, rows);
      stats_.writebacks += keys.size();
    }
  }

  // Full-scan structural checks: exclusivity, pin accounting, clock sanity.
  void check_invariants() const {
    std::unordered_set<RowKey, RowKeyHash> seen;
    std::uint64_t pins = 0;
    for (const auto& lv : levels_) {
      if (lv.slot_of.size() > lv.cfg.capacity_rows)
        throw std::logic_error("cache level over capacity");
      for (const auto& [key, slot] : lv.slot_of) {
        if (!seen.insert(key).second)
          throw std::logic_error("exclusivity violated: key in two levels");
        const Entry& e = lv.entries[slot];
        if (e.key != key) throw std::logic_error("tag/slot mismatch");
        if (e.last_access > clock_) throw std::logic_error("clock skew");
        pins += e.pin_count;
      }
    }
    if (pins != pinned_rows_) throw std::logic_error("pin accounting mismatch");
  }

  std::uint64_t pinned_rows() const { return pinned_rows_; }

 private:
  struct Entry {
    RowKey key;
    std::uint64_t last_access = 0;
    std::uint64_t access_count = 0;
    std::uint32_t pin_count = 0;
    bool dirty = false;
  };

  struct Level {
    explicit Level(const CacheLevelConfig& c) : cfg(c) {
      data.resize(cfg.capacity_rows * cfg.row_bytes);
      entries.resize(cfg.capacity_rows);
      free_slots.reserve(cfg.capacity_rows);
      for (std::uint64_t s = cfg.capacity_rows; s > 0; --s)
        free_slots.push_back(s - 1);
    }
    CacheLevelConfig cfg;
    std::vector<Byte> data;
    std::vector<Entry> entries;
    std::vector<std::uint64_t> free_slots;
    std::unordered_map<RowKey, std::uint64_t, RowKeyHash> slot_of;
    std::map<std::uint64_t, std::uint64_t> lru_index;  // last_access -> slot
  };

  void touch(Level& lv, std::uint64_t slot) {
    Entry& e = lv.entries[slot];
    if (e.last_access != 0) lv.lru_index.erase(e.last_access);
    e.last_access = ++clock_;
    ++e.access_count;
    lv.lru_index.emplace(e.last_access, slot);
  }

  std::pair<std::size_t, std::uint64_t> locate_pinned(
      const RowKey& key, const std::unordered_set<RowKey, RowKeyHash>& pins,
      const char* op) const {
    if (!pins.count(key))
      throw std::invalid_argument(std::string(op) +
                                  ": key not pinned by this batch");
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      auto it = levels_[l].slot_of.find(key);
      if (it != levels_[l].slot_of.end()) return {l, it->second};
    }
    throw std::logic_error(std::string(op) + ": pinned key not cached");
  }

  // Exact victim: LRU = min last_access among unpinned; LFU = min
  // access_count, ties to the older entry.
  std::optional<std::uint64_t> pick_victim(const Level& lv) const {
    if (config_.policy == CachePolicy::LRU) {
      for (const auto& [ts, slot] : lv.lru_index)
        if (lv.entries[slot].pin_count == 0) return slot;
      return std::nullopt;
    }
    std::optional<std::uint64_t> best;
    for (const auto& [key, slot] : lv.slot_of) {
      const Entry& e = lv.entries[slot];
      if (e.pin_count != 0) continue;
      if (!best) {
        best = slot;
        continue;
      }
      const Entry& b = lv.entries[*best];
      if (e.access_count < b.access_count ||
          (e.access_count == b.access_count && e.last_access < b.last_access))
        best = slot;
    }
    return best;
  }

  // Inserts a row into level `l`, cascading demotions (L0 -> L1 -> store).
  void insert(Store& store, std::size_t l, const RowKey& key, const Byte* row,
              const Entry& carry) {
    Level& lv = levels_[l];
    if (lv.free_slots.empty()) {
      auto victim = pick_victim(lv);
      if (!victim)
        throw CapacityDeadlock("all entries of cache level " +
                               lv.cfg.name + " are pinned");
      evict(store, l, *victim);
    }
    std::uint64_t slot = lv.free_slots.back();
    lv.free_slots.pop_back();
    Entry& e = lv.entries[slot];
    e = carry;
    e.key = key;
    if (e.last_access != 0) lv.lru_index.emplace(e.last_access, slot);
    lv.slot_of.emplace(key, slot);
    std::copy(row, row + lv.cfg.row_bytes, lv.data.begin() + slot * lv.cfg.row_bytes);
    stats_.bytes_touched[l] += lv.cfg.row_bytes;
  }

  // Removes the entry from its level; demotes to the next level or writes
  // back to the store from the last level.
  void evict(Store& store, std::size_t l, std::uint64_t slot) {
    Level& lv = levels_[l];
    Entry carry = lv.entries[slot];
    assert(carry.pin_count == 0);
    std::vector<Byte> row(lv.data.begin() + slot * lv.cfg.row_bytes,
                          lv.data.begin() + (slot + 1) * lv.cfg.row_bytes);
    remove_slot(lv, slot);
    ++stats_.evictions;
    if (l + 1 < levels_.size()) {
      insert(store, l + 1, carry.key, row.data(), carry);
    } else if (carry.dirty) {
      store.multi_set({carry.key}, {row});
      ++stats_.writebacks;
    }
  }

  void remove_slot(Level& lv, std::uint64_t slot) {
    Entry& e = lv.entries[slot];
    if (e.last_access != 0) lv.lru_index.erase(e.last_access);
    lv.slot_of.erase(e.key);
    lv.free_slots.push_back(slot);
    e = Entry{};
  }

  void ensure_in_l0(
      Store& store, const RowKey& key,
      const std::unordered_map<RowKey, std::vector<Byte>, RowKeyHash>& fetched) {
    if (levels_[0].slot_of.count(key)) return;
    for (std::size_t l = 1; l < levels_.size(); ++l) {
      Level& lv = levels_[l];
      auto it = lv.slot_of.find(key);
      if (it != lv.slot_of.end()) {
        std::uint64_t slot = it->second;
        Entry carry = lv.entries[slot];
        std::vector<Byte> row(lv.data.begin() + slot * lv.cfg.row_bytes,
                              lv.data.begin() + (slot + 1) * lv.cfg.row_bytes);
        remove_slot(lv, slot);
        insert(store, 0, key, row.data(), carry);
        ++stats_.promotions;
        return;
      }
    }
    auto fit = fetched.find(key);
    // A key classified as a hit can be demoted out of the hierarchy by an
    // earlier insertion's eviction cascade within this very batch; its latest
    // value then lives in the store, so re-fetch it.
    std::vector<Byte> row =
        fit != fetched.end() ? fit->second : store.multi_get({key})[0];
    if (row.size() != levels_[0].cfg.row_bytes)
      throw std::invalid_argument("cache row_bytes does not match table row width");
    Entry fresh;
    insert(store, 0, key, row.data(), fresh);
  }

  CacheHierarchyConfig config_;
  std::vector<Level> levels_;
  CacheStats stats_;
  std::uint64_t clock_ = 0;
  std::uint64_t pinned_rows_ = 0;
  std::unordered_map<std::uint64_t, std::unordered_set<RowKey, RowKeyHash>>
      batch_pins_;
};

}  // namespace embsim
