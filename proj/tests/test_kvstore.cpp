#include <catch_amalgamated.hpp>

#include <random>

#include "embsim/kvstore.hpp"
#include "helpers.hpp"

using namespace embsim;
using testutil::table;
using testutil::TempDir;

namespace {

ModelSpec small_model() {
  ModelSpec m;
  m.tables = {table("a", 256, 8), table("b", 128, 16)};
  return m;
}

StoreConfig store_cfg(const TempDir& dir, std::uint32_t shards = 2) {
  StoreConfig c;
  c.shard_count = shards;
  c.block_bytes = 512;
  c.memtable_bytes = 4096;
  c.compaction_trigger = 4;
  c.data_dir = dir.str();
  return c;
}

std::vector<Byte> row_of(std::uint64_t width, Byte fill) {
  return std::vector<Byte>(width, fill);
}

}  // namespace

TEST_CASE("set then get round trip in request order") {
  TempDir dir("kv-rt");
  Store store(store_cfg(dir), small_model(), InitPolicy{});
  std::vector<RowKey> keys = {{0, 3}, {1, 7}, {0, 200}};
  std::vector<std::vector<Byte>> rows = {row_of(32, 1), row_of(64, 2),
                                         row_of(32, 3)};
  store.multi_set(keys, rows);
  CHECK(store.multi_get(keys) == rows);
  CHECK(store.multi_get({keys[2], keys[0]}) ==
        std::vector<std::vector<Byte>>{rows[2], rows[0]});
}

TEST_CASE("bounds and width are enforced") {
  TempDir dir("kv-bounds");
  Store store(store_cfg(dir), small_model(), InitPolicy{});
  CHECK_THROWS_AS(store.multi_get({{5, 0}}), std::out_of_range);
  CHECK_THROWS_AS(store.multi_get({{0, 9999}}), std::out_of_range);
  CHECK_THROWS_AS(store.multi_set({{0, 0}}, {row_of(64, 1)}),
                  std::invalid_argument);
}

TEST_CASE("reopen returns previously written rows") {
  TempDir dir("kv-reopen");
  std::vector<RowKey> keys = {{0, 1}, {0, 2}, {1, 3}};
  std::vector<std::vector<Byte>> rows = {row_of(32, 9), row_of(32, 8),
                                         row_of(64, 7)};
  {
    Store store(store_cfg(dir), small_model(), InitPolicy{});
    store.multi_set(keys, rows);
    store.flush();
  }
  Store again(store_cfg(dir), small_model(), InitPolicy{});
  CHECK(again.multi_get(keys) == rows);
}

TEST_CASE("reopen with mismatched config or model fails") {
  TempDir dir("kv-mismatch");
  { Store store(store_cfg(dir), small_model(), InitPolicy{}); }
  SECTION("shard count") {
    CHECK_THROWS(Store(store_cfg(dir, 3), small_model(), InitPolicy{}));
  }
  SECTION("model shape") {
    ModelSpec other = small_model();
    other.tables[0].rows = 999;
    CHECK_THROWS(Store(store_cfg(dir), other, InitPolicy{}));
  }
  SECTION("init policy") {
    InitPolicy init;
    init.seed = 77;
    CHECK_THROWS(Store(store_cfg(dir), small_model(), init));
  }
}

TEST_CASE("deferred init replays identically across stores") {
  InitPolicy init;
  init.mode = InitPolicy::Mode::Deferred;
  init.seed = 1234;
  std::vector<RowKey> keys = {{0, 5}, {1, 2}, {0, 9}, {0, 5}};
  TempDir d1("kv-replay1"), d2("kv-replay2");
  Store s1(store_cfg(d1), small_model(), init);
  Store s2(store_cfg(d2), small_model(), init);
  CHECK(s1.multi_get(keys) == s2.multi_get(keys));
  CHECK(s1.stats().deferred_inits == 3);  // duplicate key drawn once
}

TEST_CASE("pre-initialized stores materialize every row up front") {
  InitPolicy init;
  init.mode = InitPolicy::Mode::PreInitialized;
  init.seed = 5;
  TempDir dir("kv-pre");
  Store store(store_cfg(dir), small_model(), init);
  CHECK(store.stats().live_rows == 256 + 128);
  CHECK(store.contains({0, 255}));
  CHECK(store.contains({1, 127}));
}

TEST_CASE("deferred writes less than pre-initialized on partial touch") {
  ModelSpec m;
  m.tables = {table("a", 1000, 8)};
  std::vector<RowKey> touched;
  for (std::uint64_t i = 0; i < 500; ++i) touched.push_back({0, i});

  InitPolicy pre;
  pre.mode = InitPolicy::Mode::PreInitialized;
  TempDir d1("kv-defer1");
  Store s_pre(store_cfg(d1), m, pre);
  s_pre.multi_get(touched);
  s_pre.flush();

  InitPolicy defer;
  defer.mode = InitPolicy::Mode::Deferred;
  TempDir d2("kv-defer2");
  Store s_def(store_cfg(d2), m, defer);
  s_def.multi_get(touched);
  s_def.flush();

  CHECK(s_def.stats().device_bytes_written <
        s_pre.stats().device_bytes_written);
}

TEST_CASE("writes coalesce in the memtable") {
  TempDir dir("kv-coalesce");
  StoreConfig cfg = store_cfg(dir, 1);
  cfg.memtable_bytes = 1 << 16;
  Store store(cfg, small_model(), InitPolicy{});
  for (int i = 0; i < 10; ++i)
    store.multi_set({{0, 7}}, {row_of(32, static_cast<Byte>(i))});
  CHECK(store.stats().device_bytes_written == 0);
  store.flush();
  // Ten versions folded into a single block write.
  CHECK(store.stats().device_bytes_written == cfg.block_bytes);
  CHECK(store.multi_get({{0, 7}}) ==
        std::vector<std::vector<Byte>>{row_of(32, 9)});
}

TEST_CASE("device writes are always whole blocks") {
  TempDir dir("kv-blocks");
  StoreConfig cfg = store_cfg(dir);
  Store store(cfg, small_model(), InitPolicy{});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 300; ++i) {
    RowKey k{0, rng() % 256};
    store.multi_set({k}, {row_of(32, static_cast<Byte>(rng()))});
  }
  store.flush();
  auto st = store.stats();
  CHECK(st.device_bytes_written % cfg.block_bytes == 0);
  CHECK(st.write_ios == st.device_bytes_written / cfg.block_bytes);
}

TEST_CASE("compaction bounds space amplification") {
  TempDir dir("kv-amp");
  StoreConfig cfg = store_cfg(dir, 2);
  cfg.memtable_bytes = 2048;
  cfg.compaction_trigger = 64;  // keep auto-compaction out of the way
  Store store(cfg, small_model(), InitPolicy{});
  for (int round = 0; round < 10; ++round)
    for (std::uint64_t i = 0; i < 256; ++i)
      store.multi_set({{0, i}}, {row_of(32, static_cast<Byte>(round))});
  store.flush();
  std::uint64_t live = store.live_bytes();
  CHECK(store.stats().total_file_bytes > 2 * live);  // garbage piled up
  store.compact();
  auto st = store.stats();
  CHECK(st.total_file_bytes <= 2 * live);
  CHECK(st.compactions_run >= 2);
  // Contents survive compaction.
  CHECK(store.multi_get({{0, 0}}) ==
        std::vector<std::vector<Byte>>{row_of(32, 9)});
}

TEST_CASE("automatic compaction triggers on segment count") {
  TempDir dir("kv-auto");
  StoreConfig cfg = store_cfg(dir, 1);
  cfg.memtable_bytes = 1024;
  cfg.compaction_trigger = 3;
  Store store(cfg, small_model(), InitPolicy{});
  for (std::uint64_t i = 0; i < 256; ++i)
    store.multi_set({{0, i}}, {row_of(32, 1)});
  store.flush();
  CHECK(store.stats().compactions_run > 0);
}

TEST_CASE("read accounting reflects block transfers") {
  TempDir dir("kv-read");
  StoreConfig cfg = store_cfg(dir, 1);
  Store store(cfg, small_model(), InitPolicy{});
  store.multi_set({{0, 1}}, {row_of(32, 5)});
  store.flush();
  auto before = store.stats();
  store.multi_get({{0, 1}});
  auto after = store.stats();
  CHECK(after.read_ios == before.read_ios + 1);
  CHECK(after.device_bytes_read - before.device_bytes_read >= cfg.block_bytes);
  CHECK((after.device_bytes_read - before.device_bytes_read) %
            cfg.block_bytes ==
        0);
}
