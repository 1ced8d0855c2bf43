#include <catch_amalgamated.hpp>

#include <deque>
#include <random>

#include "embsim/cache.hpp"
#include "helpers.hpp"

using namespace embsim;
using testutil::table;
using testutil::TempDir;

namespace {

ModelSpec one_table(std::uint64_t rows) {
  ModelSpec m;
  m.tables = {table("a", rows, 8)};  // 32-byte rows
  return m;
}

StoreConfig backing_cfg(const TempDir& dir) {
  StoreConfig c;
  c.shard_count = 2;
  c.block_bytes = 512;
  c.memtable_bytes = 1 << 16;
  c.data_dir = dir.str();
  return c;
}

InitPolicy deferred() {
  InitPolicy i;
  i.mode = InitPolicy::Mode::Deferred;
  return i;
}

CacheHierarchyConfig levels(std::initializer_list<std::uint64_t> caps,
                            CachePolicy policy = CachePolicy::LRU) {
  CacheHierarchyConfig c;
  c.policy = policy;
  int i = 0;
  for (std::uint64_t cap : caps) {
    CacheLevelConfig l;
    l.name = "L" + std::to_string(i++);
    l.capacity_rows = cap;
    l.row_bytes = 32;
    c.levels.push_back(l);
  }
  return c;
}

}  // namespace

TEST_CASE("lookup_group partitions every key exactly once") {
  TempDir dir("cache-part");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({4, 4}));
  cache.apply_batch(store, {{0, 1}, {0, 2}}, 0);
  cache.unpin(0);
  auto part = cache.lookup_group({{0, 1}, {0, 2}, {0, 3}, {0, 1}});
  std::size_t total = part.misses.size();
  for (const auto& h : part.hits) total += h.size();
  CHECK(total == 4);
  CHECK(part.hits[0].size() == 3);  // 1, 2, 1 again
  CHECK(part.misses.size() == 1);
  // Pure: repeated classification is identical.
  auto again = cache.lookup_group({{0, 1}, {0, 2}, {0, 3}, {0, 1}});
  CHECK(again.misses == part.misses);
}

TEST_CASE("exact LRU matches the stack-distance oracle per access") {
  const std::uint64_t capacity = 16;
  TempDir dir("cache-lru");
  Store store(backing_cfg(dir), one_table(200), deferred());
  CacheHierarchy cache(levels({capacity}));
  std::mt19937_64 rng(99);
  std::deque<std::uint64_t> stack;  // MRU front
  for (std::uint64_t i = 0; i < 20'000; ++i) {
    std::uint64_t idx = rng() % 64;
    auto it = std::find(stack.begin(), stack.end(), idx);
    bool oracle_hit =
        it != stack.end() &&
        static_cast<std::uint64_t>(it - stack.begin()) < capacity;
    if (it != stack.end()) stack.erase(it);
    stack.push_front(idx);

    std::uint64_t misses_before = cache.stats().misses;
    cache.apply_batch(store, {{0, idx}}, i);
    cache.unpin(i);
    bool cache_hit = cache.stats().misses == misses_before;
    REQUIRE(cache_hit == oracle_hit);
  }
  cache.check_invariants();
}

TEST_CASE("lfu evicts the least frequently used entry") {
  TempDir dir("cache-lfu");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({3}, CachePolicy::LFU));
  // Build frequencies: row 1 x3, row 2 x2, row 3 x1.
  std::uint64_t b = 0;
  for (std::uint64_t idx : {1, 1, 1, 2, 2, 3}) {
    cache.apply_batch(store, {{0, idx}}, b);
    cache.unpin(b++);
  }
  cache.apply_batch(store, {{0, 4}}, b);  // must evict row 3
  cache.unpin(b++);
  auto part = cache.lookup_group({{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  CHECK(part.misses == std::vector<RowKey>{{0, 3}});
}

TEST_CASE("exclusive hierarchy with promotion and demotion") {
  TempDir dir("cache-excl");
  Store store(backing_cfg(dir), one_table(500), deferred());
  CacheHierarchy cache(levels({8, 16}));
  std::mt19937_64 rng(7);
  for (std::uint64_t b = 0; b < 2000; ++b) {
    std::vector<RowKey> keys;
    std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) keys.push_back({0, rng() % 100});
    auto rows = cache.apply_batch(store, keys, b);
    CHECK(rows.size() == keys.size());
    cache.check_invariants();  // throws on exclusivity/pin violations
    auto part = cache.lookup_group(keys);
    CHECK(part.misses.empty());  // applied keys now reside in L0
    cache.unpin(b);
  }
  CHECK(cache.stats().promotions > 0);
  CHECK(cache.stats().evictions > 0);
}

TEST_CASE("backward pass hits without store reads") {
  TempDir dir("cache-bwd");
  Store store(backing_cfg(dir), one_table(1000), deferred());
  CacheHierarchy cache(levels({64}));
  std::mt19937_64 rng(3);
  for (std::uint64_t b = 0; b < 100; ++b) {
    std::vector<RowKey> keys;
    for (int i = 0; i < 32; ++i) keys.push_back({0, rng() % 1000});
    cache.apply_batch(store, keys, b);  // forward
    std::uint64_t reads_before = store.stats().read_ios;
    auto rows = cache.read_batch(keys, b);  // backward re-read
    for (auto& r : rows) r[0] ^= 0xFF;
    cache.write_batch(keys, rows, b);
    cache.unpin(b);
    CHECK(store.stats().read_ios == reads_before);
  }
}

TEST_CASE("dirty rows write back exactly once per eviction") {
  TempDir dir("cache-wb");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({2}));
  cache.apply_batch(store, {{0, 1}}, 0);
  auto rows = cache.read_batch({{0, 1}}, 0);
  rows[0][0] = 0xAB;
  cache.write_batch({{0, 1}}, rows, 0);
  rows[0][0] = 0xCD;  // second write to the same cached row
  cache.write_batch({{0, 1}}, rows, 0);
  cache.unpin(0);
  CHECK(cache.stats().writebacks == 0);
  // Fill the second slot, then force row 1 (the LRU entry) out.
  cache.apply_batch(store, {{0, 2}}, 1);
  cache.unpin(1);
  cache.apply_batch(store, {{0, 3}}, 2);
  cache.unpin(2);
  CHECK(cache.stats().writebacks == 1);
  CHECK(store.multi_get({{0, 1}})[0][0] == 0xCD);
}

TEST_CASE("flush_all persists dirty entries") {
  TempDir dir("cache-flush");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({8}));
  std::vector<RowKey> keys = {{0, 1}, {0, 2}, {0, 3}};
  cache.apply_batch(store, keys, 0);
  auto rows = cache.read_batch(keys, 0);
  for (auto& r : rows) r[0] = 0x42;
  cache.write_batch(keys, rows, 0);
  CHECK_THROWS_AS(cache.flush_all(store), std::logic_error);  // still pinned
  cache.unpin(0);
  cache.flush_all(store);
  CHECK(cache.stats().writebacks == 3);
  for (const auto& k : keys) CHECK(store.multi_get({k})[0][0] == 0x42);
  // Second flush has nothing dirty left.
  cache.flush_all(store);
  CHECK(cache.stats().writebacks == 3);
}

TEST_CASE("pinned rows survive a deep pipeline without deadlock") {
  TempDir dir("cache-pipe");
  Store store(backing_cfg(dir), one_table(5000), deferred());
  CacheHierarchy cache(levels({64, 64}));
  std::mt19937_64 rng(13);
  std::deque<std::uint64_t> inflight;
  for (std::uint64_t b = 0; b < 1000; ++b) {
    std::vector<RowKey> keys;
    for (int i = 0; i < 16; ++i) keys.push_back({0, rng() % 5000});
    cache.apply_batch(store, keys, b);  // pins <= 48 rows across depth 3
    inflight.push_back(b);
    if (inflight.size() == 3) {
      cache.unpin(inflight.front());
      inflight.pop_front();
    }
    cache.check_invariants();
  }
  CHECK(cache.stats().pinned_rows_high_water <= 48);
}

TEST_CASE("capacity deadlock when every slot is pinned") {
  TempDir dir("cache-dead");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({2}));
  cache.apply_batch(store, {{0, 1}, {0, 2}}, 0);  // both slots pinned
  CHECK_THROWS_AS(cache.apply_batch(store, {{0, 3}}, 1), CapacityDeadlock);
}

TEST_CASE("unpin is idempotent and per batch") {
  TempDir dir("cache-unpin");
  Store store(backing_cfg(dir), one_table(100), deferred());
  CacheHierarchy cache(levels({4}));
  cache.apply_batch(store, {{0, 1}}, 0);
  cache.apply_batch(store, {{0, 1}, {0, 2}}, 1);  // row 1 pinned by both
  cache.unpin(0);
  CHECK(cache.pinned_rows() == 2);  // batch 1 still holds row 1 and 2
  cache.unpin(0);                   // no-op
  CHECK(cache.pinned_rows() == 2);
  cache.unpin(1);
  CHECK(cache.pinned_rows() == 0);
  cache.check_invariants();
}
