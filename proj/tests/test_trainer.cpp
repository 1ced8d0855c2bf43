#include <catch_amalgamated.hpp>

#include "embsim/trainer.hpp"
#include "embsim/workload.hpp"
#include "helpers.hpp"

using namespace embsim;
using testutil::table;
using testutil::TempDir;

namespace {

ModelSpec two_table_model() {
  ModelSpec m;
  m.target_qps = 1000;
  m.tables = {table("hot", 300, 8, 4, 1.0), table("cold", 200, 8, 4, 2.0)};
  return m;
}

Trace make_trace(const ModelSpec& m, std::uint64_t batches,
                 std::uint64_t seed) {
  TraceSpec s;
  s.num_batches = batches;
  s.batch_size = 8;
  s.seed = seed;
  s.default_dist.kind = IndexDistribution::Kind::TopHeavy;
  s.default_dist.hot_fraction = 0.2;
  s.default_dist.hot_mass = 0.8;
  return generate(m, s);
}

RunConfig base_config(const ModelSpec& m, const TempDir& dir) {
  RunConfig rc;
  rc.model = m;
  rc.platform.gpu_count = 1;
  rc.platform.devices = {device_preset(DeviceKind::HBM),
                         device_preset(DeviceKind::DRAM),
                         device_preset(DeviceKind::NAND_SSD)};
  rc.placement.assignment["hot"] = {DeviceKind::HBM, 0};
  rc.placement.assignment["cold"] = {DeviceKind::NAND_SSD, 0};
  CacheLevelConfig l0;
  l0.name = "DRAM";
  l0.capacity_rows = 64;
  l0.row_bytes = 32;
  rc.cache.levels = {l0};
  rc.store.shard_count = 2;
  rc.store.block_bytes = 512;
  rc.store.memtable_bytes = 4096;
  rc.store.data_dir = dir.str();
  rc.init.mode = InitPolicy::Mode::Deferred;
  rc.init.seed = 21;
  rc.update.kind = UpdateRule::Kind::SGD;
  rc.update.seed = 8;
  rc.pipeline.depth = 1;
  return rc;
}

}  // namespace

TEST_CASE("simulated run matches the flat reference oracle") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 30, 4);
  TempDir dir("tr-oracle");
  RunConfig rc = base_config(m, dir);
  SECTION("deferred init") {}
  SECTION("pre-initialized") { rc.init.mode = InitPolicy::Mode::PreInitialized; }
  SECTION("aggregate-count updates") {
    rc.update.kind = UpdateRule::Kind::AggregateCount;
  }
  RunResult res = run(rc, trace);
  ModelState oracle = reference_run(m, trace, rc.init, rc.update);
  REQUIRE(res.final_state.size() == oracle.size());
  for (std::size_t ti = 0; ti < oracle.size(); ++ti)
    CHECK(res.final_state[ti] == oracle[ti]);
}

TEST_CASE("pipeline depth changes timing, never semantics") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 40, 9);
  TempDir d1("tr-depth1"), d3("tr-depth3");
  RunConfig rc1 = base_config(m, d1);
  RunConfig rc3 = base_config(m, d3);
  // Room for every row of the block-placed table: no evictions, so the two
  // schedules see the same residency at every lookup.
  rc1.cache.levels[0].capacity_rows = 256;
  rc3.cache.levels[0].capacity_rows = 256;
  rc3.pipeline.depth = 3;
  RunResult r1 = run(rc1, trace);
  RunResult r3 = run(rc3, trace);
  CHECK(r1.final_state == r3.final_state);
  // Capacity is ample (no evictions), so hit counts agree exactly too.
  CHECK(r1.metrics.cache_evictions == 0);
  CHECK(r1.metrics.cache_hits == r3.metrics.cache_hits);
  CHECK(r1.metrics.cache_misses == r3.metrics.cache_misses);
}

TEST_CASE("identical runs produce identical reports") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 20, 2);
  TempDir d1("tr-det1"), d2("tr-det2");
  RunResult r1 = run(base_config(m, d1), trace);
  RunResult r2 = run(base_config(m, d2), trace);
  CHECK(report_to_json(r1.metrics).dump(2) ==
        report_to_json(r2.metrics).dump(2));
  CHECK(report_to_csv(r1.metrics) == report_to_csv(r2.metrics));
  CHECK(r1.final_state == r2.final_state);
}

TEST_CASE("deferred init writes less than pre-initialized") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 10, 6);  // touches a fraction of 'cold'
  TempDir d1("tr-wr1"), d2("tr-wr2");
  RunConfig defer = base_config(m, d1);
  RunConfig pre = base_config(m, d2);
  pre.init.mode = InitPolicy::Mode::PreInitialized;
  RunResult r_defer = run(defer, trace);
  RunResult r_pre = run(pre, trace);
  CHECK(r_defer.metrics.store.device_bytes_written <
        r_pre.metrics.store.device_bytes_written);
}

TEST_CASE("metrics account time, power and energy") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 15, 1);
  TempDir dir("tr-metrics");
  RunConfig rc = base_config(m, dir);
  rc.compute_seconds_per_batch = 1e-4;
  RunResult res = run(rc, trace);
  const MetricsReport& mr = res.metrics;
  CHECK(mr.simulated_seconds >= 15 * 1e-4);
  CHECK(mr.simulated_qps == Catch::Approx(15.0 * 8 / mr.simulated_seconds));
  CHECK(mr.platform_power_watts > 0.0);
  CHECK(mr.energy_joules ==
        Catch::Approx(mr.platform_power_watts * mr.simulated_seconds));
  CHECK(mr.device_usage.count("NAND_SSD") == 1);
  REQUIRE(mr.endurance.size() == 1);
  CHECK(mr.endurance[0].device == "NAND_SSD");
  CHECK(mr.cache_hit_rate >= 0.0);
  CHECK(mr.cache_hit_rate <= 1.0);
}

TEST_CASE("report json round trip") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 5, 3);
  TempDir dir("tr-report");
  RunResult res = run(base_config(m, dir), trace);
  std::string path = (dir.path / "report.json").string();
  report_write(res.metrics, path, ReportFormat::Json);
  MetricsReport back = report_read_json(path);
  CHECK(back.cache_misses == res.metrics.cache_misses);
  CHECK(back.store.device_bytes_written ==
        res.metrics.store.device_bytes_written);
  CHECK(back.simulated_seconds == res.metrics.simulated_seconds);
}

TEST_CASE("placement must cover every table") {
  ModelSpec m = two_table_model();
  Trace trace = make_trace(m, 2, 1);
  TempDir dir("tr-badplace");
  RunConfig rc = base_config(m, dir);
  rc.placement.assignment.erase("cold");
  CHECK_THROWS_AS(run(rc, trace), std::invalid_argument);
}
