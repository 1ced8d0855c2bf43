#include <catch_amalgamated.hpp>

#include "embsim/memmodel.hpp"
#include "helpers.hpp"

using namespace embsim;
using testutil::table;

TEST_CASE("sparse parameter bytes") {
  ModelSpec m;
  SECTION("zero tables is zero") { CHECK(sparse_param_bytes(m) == 0); }
  SECTION("two identical tables") {
    m.tables = {table("a", 1'000'000, 128), table("b", 1'000'000, 128)};
    CHECK(sparse_param_bytes(m) == 1'024'000'000ULL);
  }
}

TEST_CASE("capacity includes optimizer state") {
  ModelSpec m;
  m.tables = {table("a", 100, 128, 4, 1.0, 1)};
  CHECK(capacity_with_optimizer_bytes(m) == 51'600ULL);
  CHECK(capacity_with_optimizer_bytes(m) >= sparse_param_bytes(m));
}

TEST_CASE("bandwidth counts forward and backward") {
  ModelSpec m;
  m.target_qps = 1000;
  m.tables = {table("a", 10, 128, 4, 33.0)};
  CHECK(memory_bandwidth_bytes_per_s(m) == 33'792'000.0);
}

TEST_CASE("required iops scales with the miss ratio") {
  std::vector<TableSpec> ts = {table("a", 10, 8, 4, 1.0)};
  // qps x pooling = 6.25e6 "base" lookups per second.
  CHECK(required_iops(6.25e6, ts, 1.0) == 6.25e6);
  CHECK(required_iops(6.25e6, ts, 0.3) == 6.25e6 * 0.3);
  CHECK(required_iops(6.25e6, ts, 0.0) == 0.0);
  CHECK_THROWS_AS(required_iops(1.0, ts, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(required_iops(1.0, ts, -0.1), std::invalid_argument);
}

TEST_CASE("writes per day") {
  std::vector<TableSpec> ts = {table("a", 10, 128, 4, 33.0)};
  double expect = 86400.0 * 100.0 * 33.0 * 128.0 * 4.0 * 0.3;
  CHECK(writes_per_day_bytes(100.0, ts, 0.3) == expect);
  CHECK(expect == Catch::Approx(4.3795e10).epsilon(1e-4));
}

TEST_CASE("endurance verdicts") {
  MemoryDevice nand = device_preset(DeviceKind::NAND_SSD);
  MemoryDevice bla = device_preset(DeviceKind::BLA_SCM);
  auto fail = check_endurance(10e12, nand);
  CHECK_FALSE(fail.pass);
  CHECK(fail.excess_bytes_per_day == Catch::Approx(2e12));
  auto pass = check_endurance(10e12, bla);
  CHECK(pass.pass);
  CHECK(pass.excess_bytes_per_day == 0.0);
  MemoryDevice dram = device_preset(DeviceKind::DRAM);
  CHECK_THROWS_AS(check_endurance(1.0, dram), std::invalid_argument);
}

TEST_CASE("platform power") {
  PlatformConfig p;
  p.gpu_count = 1;
  SECTION("dram only") {
    p.devices = {device_preset(DeviceKind::HBM),
                 device_preset(DeviceKind::DRAM)};
    // HBM idle (no bandwidth used) so only the DRAM capacity term remains.
    CHECK(platform_power_watts(p, 0.0) == Catch::Approx(144.0));
  }
  SECTION("byte-addressable scm") {
    p.devices = {device_preset(DeviceKind::HBM),
                 device_preset(DeviceKind::BYA_SCM)};
    CHECK(platform_power_watts(p, 0.0) == Catch::Approx(200.704));
  }
  SECTION("hbm power follows used bandwidth") {
    p.devices = {device_preset(DeviceKind::HBM)};
    CHECK(platform_power_watts(p, 0.0) == 0.0);
    CHECK(platform_power_watts(p, 100.0) == Catch::Approx(500.0));
  }
}
