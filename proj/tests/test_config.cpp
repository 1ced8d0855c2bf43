#include <catch_amalgamated.hpp>

#include "embsim/config.hpp"
#include "helpers.hpp"

using namespace embsim;
using nlohmann::json;

namespace {

json minimal_config() {
  json j;
  j["version"] = 1;
  j["platform"]["gpu_count"] = 1;
  j["platform"]["devices"] = json::array();
  j["platform"]["devices"].push_back({{"kind", "HBM"}, {"preset", true}});
  j["platform"]["devices"].push_back({{"kind", "NAND_SSD"}, {"preset", true}});
  j["model"]["target_qps"] = 100.0;
  j["model"]["tables"] = json::array();
  j["model"]["tables"].push_back(
      {{"id", "t0"}, {"rows", 100}, {"dim", 8}, {"pooling", 2.0}});
  return j;
}

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  ConfigDocument doc = parse_config(minimal_config());
  CHECK(doc.platform.devices.size() == 2);
  CHECK(doc.model.tables[0].precision_bytes == 4);
  CHECK(doc.model.tables[0].optimizer_width == 0);
  CHECK(doc.characterize_alphas == std::vector<double>{1.0, 0.3});
  CHECK_FALSE(doc.trace.has_value());
}

TEST_CASE("unknown fields are rejected with their path") {
  json j = minimal_config();
  j["model"]["tables"][0]["rowz"] = 5;
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("/model/tables/0/rowz"));
  json k = minimal_config();
  k["bogus"] = 1;
  CHECK_THROWS_WITH(parse_config(k),
                    Catch::Matchers::ContainsSubstring("/bogus"));
}

TEST_CASE("missing required fields name the path") {
  json j = minimal_config();
  j["model"].erase("target_qps");
  CHECK_THROWS_WITH(parse_config(j),
                    Catch::Matchers::ContainsSubstring("/model/target_qps"));
  json k = minimal_config();
  k.erase("platform");
  CHECK_THROWS_WITH(parse_config(k),
                    Catch::Matchers::ContainsSubstring("/platform"));
}

TEST_CASE("version is checked") {
  json j = minimal_config();
  j["version"] = 2;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("device presets merge with overrides") {
  json j = minimal_config();
  j["platform"]["devices"][1]["capacity_gb"] = 1024.0;
  ConfigDocument doc = parse_config(j);
  const MemoryDevice* nand = doc.platform.find(DeviceKind::NAND_SSD);
  REQUIRE(nand != nullptr);
  CHECK(nand->capacity_bytes == static_cast<std::uint64_t>(1024 * kGB));
  // Untouched preset fields survive.
  CHECK(nand->endurance_bytes_per_day == 8e12);
  CHECK(nand->block_bytes == 4096u);
}

TEST_CASE("trace and init sections parse") {
  json j = minimal_config();
  j["trace"] = {{"num_batches", 5},
                {"batch_size", 4},
                {"seed", 7},
                {"distribution",
                 {{"kind", "TOP_HEAVY"}, {"hot_fraction", 0.2}, {"hot_mass", 0.8}}}};
  j["init"] = {{"mode", "DEFERRED"},
               {"seed", 3},
               {"distribution", {{"kind", "NORMAL"}, {"mean", 0.0}, {"std", 0.1}}}};
  ConfigDocument doc = parse_config(j);
  REQUIRE(doc.trace.has_value());
  CHECK(doc.trace->num_batches == 5);
  CHECK(doc.init.mode == InitPolicy::Mode::Deferred);
  CHECK(doc.init.distribution.kind == ValueDistribution::Kind::Normal);
}

TEST_CASE("characterize equals direct model calls") {
  json j = minimal_config();
  ConfigDocument doc = parse_config(j);
  CharacterizeReport rep = characterize(doc);
  CHECK(rep.sparse_param_bytes == sparse_param_bytes(doc.model));
  CHECK(rep.capacity_bytes == capacity_with_optimizer_bytes(doc.model));
  CHECK(rep.bandwidth_bytes_per_s == memory_bandwidth_bytes_per_s(doc.model));
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[1].alpha == 0.3);
  CHECK(rep.rows[1].required_iops ==
        required_iops(doc.model.target_qps, doc.model.tables, 0.3));
  REQUIRE(rep.rows[1].endurance.size() == 1);
  CHECK(rep.rows[1].endurance[0].device == std::string("NAND_SSD"));
}

TEST_CASE("characterize with zero tables is all zero") {
  json j = minimal_config();
  j["model"]["tables"] = json::array();
  CharacterizeReport rep = characterize(parse_config(j));
  CHECK(rep.sparse_param_bytes == 0);
  CHECK(rep.capacity_bytes == 0);
  CHECK(rep.bandwidth_bytes_per_s == 0.0);
  CHECK(rep.rows[0].required_iops == 0.0);
}
