#pragma once

// Unified JSON configuration document and the characterize report.
// Parsing is strict: unknown fields are rejected with their JSON-pointer
// path, and the document version is checked.

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embsim/cache.hpp"
#include "embsim/kvstore.hpp"
#include "embsim/memmodel.hpp"
#include "embsim/model.hpp"
#include "embsim/trainer.hpp"
#include "embsim/workload.hpp"

namespace embsim {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace cfg_detail {

inline void expect_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected object");
}

inline void reject_unknown(const nlohmann::json& j, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(path + "/" + key + ": unknown field");
  }
}

template <typename T>
T require(const nlohmann::json& j, const std::string& path, const char* field) {
  if (!j.contains(field)) throw ConfigError(path + "/" + field + ": missing");
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "/" + field + ": " + e.what());
  }
}

template <typename T>
T optional_or(const nlohmann::json& j, const std::string& path,
              const char* field, T fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "/" + field + ": " + e.what());
  }
}

inline const nlohmann::json& member(const nlohmann::json& j,
                                    const std::string& path,
                                    const char* field) {
  if (!j.contains(field)) throw ConfigError(path + "/" + field + ": missing");
  return j.at(field);
}

}  // namespace cfg_detail

inline ValueDistribution parse_distribution(const nlohmann::json& j,
                                            const std::string& path) {
  using namespace cfg_detail;
  expect_object(j, path);
  reject_unknown(j, path, {"kind", "lo", "hi", "mean", "std"});
  ValueDistribution d;
  std::string kind = require<std::string>(j, path, "kind");
  if (kind == "UNIFORM") {
    d.kind = ValueDistribution::Kind::Uniform;
    d.a = require<double>(j, path, "lo");
    d.b = require<double>(j, path, "hi");
  } else if (kind == "NORMAL") {
    d.kind = ValueDistribution::Kind::Normal;
    d.a = require<double>(j, path, "mean");
    d.b = require<double>(j, path, "std");
  } else {
    throw ConfigError(path + "/kind: expected UNIFORM or NORMAL");
  }
  return d;
}

inline IndexDistribution parse_index_distribution(const nlohmann::json& j,
                                                  const std::string& path) {
  using namespace cfg_detail;
  expect_object(j, path);
  reject_unknown(j, path, {"kind", "s", "hot_fraction", "hot_mass"});
  IndexDistribution d;
  std::string kind = require<std::string>(j, path, "kind");
  if (kind == "ZIPF") {
    d.kind = IndexDistribution::Kind::Zipf;
    d.zipf_s = require<double>(j, path, "s");
  } else if (kind == "TOP_HEAVY") {
    d.kind = IndexDistribution::Kind::TopHeavy;
    d.hot_fraction = require<double>(j, path, "hot_fraction");
    d.hot_mass = require<double>(j, path, "hot_mass");
  } else {
    throw ConfigError(path + "/kind: expected ZIPF or TOP_HEAVY");
  }
  d.validate();
  return d;
}

inline MemoryDevice parse_device(const nlohmann::json& j,
                                 const std::string& path) {
  using namespace cfg_detail;
  expect_object(j, path);
  reject_unknown(j, path,
                 {"kind", "preset", "capacity_gb", "bandwidth_gb_per_s",
                  "block_bytes", "iops_limit", "endurance_tb_per_day",
                  "power_mw_per_gb", "latency_p50_ns"});
  DeviceKind kind = kind_from_name(require<std::string>(j, path, "kind"));
  MemoryDevice d;
  if (optional_or<bool>(j, path, "preset", false)) {
    d = device_preset(kind);
  } else {
    d.kind = kind;
    d.bandwidth_bytes_per_s = 0.0;
    d.capacity_bytes = 0;
  }
  if (j.contains("capacity_gb"))
    d.capacity_bytes = static_cast<std::uint64_t>(
        require<double>(j, path, "capacity_gb") * kGB);
  if (j.contains("bandwidth_gb_per_s"))
    d.bandwidth_bytes_per_s = require<double>(j, path, "bandwidth_gb_per_s") * kGB;
  if (j.contains("block_bytes"))
    d.block_bytes = require<std::uint32_t>(j, path, "block_bytes");
  if (j.contains("iops_limit"))
    d.iops_limit = require<double>(j, path, "iops_limit");
  if (j.contains("endurance_tb_per_day"))
    d.endurance_bytes_per_day =
        require<double>(j, path, "endurance_tb_per_day") * 1e12;
  if (j.contains("power_mw_per_gb"))
    d.power_mw_per_gb = require<double>(j, path, "power_mw_per_gb");
  if (j.contains("latency_p50_ns"))
    d.latency_p50_ns = require<double>(j, path, "latency_p50_ns");
  d.validate();
  return d;
}

struct ConfigDocument {
  PlatformConfig platform;
  ModelSpec model;
  StoreConfig store;
  CacheHierarchyConfig cache;
  InitPolicy init;
  PipelineConfig pipeline;
  UpdateRule update;
  std::optional<TraceSpec> trace;
  double compute_seconds_per_batch = 0.0;
  std::vector<double> characterize_alphas{1.0, 0.3};
};

inline ConfigDocument parse_config(const nlohmann::json& j) {
  using namespace cfg_detail;
  expect_object(j, "");
  reject_unknown(j, "",
                 {"version", "platform", "model", "store", "cache", "init",
                  "pipeline", "update", "trace", "latency", "characterize"});
  if (require<int>(j, "", "version") != 1)
    throw ConfigError("/version: unsupported config version");
  ConfigDocument doc;

  const auto& pj = member(j, "", "platform");
  expect_object(pj, "/platform");
  reject_unknown(pj, "/platform", {"gpu_count", "devices"});
  doc.platform.gpu_count = require<std::uint32_t>(pj, "/platform", "gpu_count");
  for (std::size_t i = 0; i < member(pj, "/platform", "devices").size(); ++i)
    doc.platform.devices.push_back(parse_device(
        pj.at("devices").at(i), "/platform/devices/" + std::to_string(i)));
  doc.platform.validate();

  const auto& mj = member(j, "", "model");
  expect_object(mj, "/model");
  reject_unknown(mj, "/model", {"target_qps", "tables"});
  doc.model.target_qps = require<double>(mj, "/model", "target_qps");
  for (std::size_t i = 0; i < member(mj, "/model", "tables").size(); ++i) {
    const auto& tj = mj.at("tables").at(i);
    std::string path = "/model/tables/" + std::to_string(i);
    expect_object(tj, path);
    reject_unknown(tj, path,
                   {"id", "rows", "dim", "precision_bytes", "pooling",
                    "optimizer_width"});
    TableSpec t;
    t.id = require<std::string>(tj, path, "id");
    t.rows = require<std::uint64_t>(tj, path, "rows");
    t.dim = require<std::uint32_t>(tj, path, "dim");
    t.precision_bytes = optional_or<std::uint32_t>(tj, path, "precision_bytes", 4);
    t.pooling = require<double>(tj, path, "pooling");
    t.optimizer_width = optional_or<std::uint32_t>(tj, path, "optimizer_width", 0);
    doc.model.tables.push_back(std::move(t));
  }
  doc.model.validate();

  if (j.contains("store")) {
    const auto& sj = j.at("store");
    expect_object(sj, "/store");
    reject_unknown(sj, "/store",
                   {"shard_count", "block_bytes", "memtable_bytes",
                    "compaction_trigger", "compaction_stagger", "data_dir"});
    doc.store.shard_count = require<std::uint32_t>(sj, "/store", "shard_count");
    doc.store.block_bytes =
        optional_or<std::uint32_t>(sj, "/store", "block_bytes", 4096);
    doc.store.memtable_bytes =
        optional_or<std::uint64_t>(sj, "/store", "memtable_bytes", 1 << 20);
    doc.store.compaction_trigger =
        optional_or<std::uint32_t>(sj, "/store", "compaction_trigger", 8);
    doc.store.compaction_stagger =
        optional_or<bool>(sj, "/store", "compaction_stagger", false);
    doc.store.data_dir = require<std::string>(sj, "/store", "data_dir");
    doc.store.validate();
  }

  if (j.contains("cache")) {
    const auto& cj = j.at("cache");
    expect_object(cj, "/cache");
    reject_unknown(cj, "/cache", {"policy", "levels"});
    std::string policy = optional_or<std::string>(cj, "/cache", "policy", "LRU");
    if (policy == "LRU")
      doc.cache.policy = CachePolicy::LRU;
    else if (policy == "LFU")
      doc.cache.policy = CachePolicy::LFU;
    else
      throw ConfigError("/cache/policy: expected LRU or LFU");
    for (std::size_t i = 0; i < member(cj, "/cache", "levels").size(); ++i) {
      const auto& lj = cj.at("levels").at(i);
      std::string path = "/cache/levels/" + std::to_string(i);
      expect_object(lj, path);
      reject_unknown(lj, path, {"name", "capacity_rows", "row_bytes"});
      CacheLevelConfig l;
      l.name = require<std::string>(lj, path, "name");
      l.capacity_rows = require<std::uint64_t>(lj, path, "capacity_rows");
      l.row_bytes = optional_or<std::uint64_t>(lj, path, "row_bytes", 0);
      doc.cache.levels.push_back(std::move(l));
    }
  }

  if (j.contains("init")) {
    const auto& ij = j.at("init");
    expect_object(ij, "/init");
    reject_unknown(ij, "/init", {"mode", "distribution", "seed", "queue_depth"});
    std::string mode = require<std::string>(ij, "/init", "mode");
    if (mode == "PRE_INITIALIZED")
      doc.init.mode = InitPolicy::Mode::PreInitialized;
    else if (mode == "DEFERRED")
      doc.init.mode = InitPolicy::Mode::Deferred;
    else
      throw ConfigError("/init/mode: expected PRE_INITIALIZED or DEFERRED");
    if (ij.contains("distribution"))
      doc.init.distribution =
          parse_distribution(ij.at("distribution"), "/init/distribution");
    doc.init.seed = optional_or<std::uint64_t>(ij, "/init", "seed", 0);
    doc.init.queue_depth =
        optional_or<std::uint32_t>(ij, "/init", "queue_depth", 1024);
  }

  if (j.contains("pipeline")) {
    const auto& qj = j.at("pipeline");
    expect_object(qj, "/pipeline");
    reject_unknown(qj, "/pipeline", {"depth"});
    doc.pipeline.depth = require<std::uint32_t>(qj, "/pipeline", "depth");
    if (doc.pipeline.depth < 1)
      throw ConfigError("/pipeline/depth: must be >= 1");
  }

  if (j.contains("update")) {
    const auto& uj = j.at("update");
    expect_object(uj, "/update");
    reject_unknown(uj, "/update", {"rule", "learning_rate", "seed"});
    std::string rule = require<std::string>(uj, "/update", "rule");
    if (rule == "SGD")
      doc.update.kind = UpdateRule::Kind::SGD;
    else if (rule == "AGGREGATE_COUNT")
      doc.update.kind = UpdateRule::Kind::AggregateCount;
    else
      throw ConfigError("/update/rule: expected SGD or AGGREGATE_COUNT");
    doc.update.learning_rate =
        optional_or<double>(uj, "/update", "learning_rate", 0.01);
    doc.update.seed = optional_or<std::uint64_t>(uj, "/update", "seed", 0);
  }

  if (j.contains("trace")) {
    const auto& tj = j.at("trace");
    expect_object(tj, "/trace");
    reject_unknown(tj, "/trace",
                   {"num_batches", "batch_size", "seed", "distribution",
                    "per_table"});
    TraceSpec spec;
    spec.num_batches = require<std::uint64_t>(tj, "/trace", "num_batches");
    spec.batch_size = require<std::uint32_t>(tj, "/trace", "batch_size");
    spec.seed = optional_or<std::uint64_t>(tj, "/trace", "seed", 0);
    if (tj.contains("distribution"))
      spec.default_dist =
          parse_index_distribution(tj.at("distribution"), "/trace/distribution");
    if (tj.contains("per_table"))
      for (const auto& [id, dj] : tj.at("per_table").items())
        spec.per_table[id] =
            parse_index_distribution(dj, "/trace/per_table/" + id);
    spec.validate();
    doc.trace = std::move(spec);
  }

  if (j.contains("latency")) {
    const auto& lj = j.at("latency");
    expect_object(lj, "/latency");
    reject_unknown(lj, "/latency", {"compute_seconds_per_batch"});
    doc.compute_seconds_per_batch =
        optional_or<double>(lj, "/latency", "compute_seconds_per_batch", 0.0);
  }

  if (j.contains("characterize")) {
    const auto& aj = j.at("characterize");
    expect_object(aj, "/characterize");
    reject_unknown(aj, "/characterize", {"alphas"});
    doc.characterize_alphas =
        require<std::vector<double>>(aj, "/characterize", "alphas");
  }
  return doc;
}

inline ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

// ---- characterize -----------------------------------------------------------
// The closed-form feasibility analysis: capacity, bandwidth, per-alpha IOPS
// and writes/day with endurance verdicts, and platform power.

struct CharacterizeReport {
  std::uint64_t sparse_param_bytes = 0;
  std::uint64_t capacity_bytes = 0;
  double bandwidth_bytes_per_s = 0.0;
  struct AlphaRow {
    double alpha = 0.0;
    double required_iops = 0.0;
    double writes_per_day_bytes = 0.0;
    struct Verdict {
      std::string device;
      bool pass = true;
      double excess_bytes_per_day = 0.0;
    };
    std::vector<Verdict> endurance;
  };
  std::vector<AlphaRow> rows;
  double platform_power_watts = 0.0;
};

inline CharacterizeReport characterize(const ConfigDocument& doc) {
  CharacterizeReport rep;
  rep.sparse_param_bytes = sparse_param_bytes(doc.model);
  rep.capacity_bytes = capacity_with_optimizer_bytes(doc.model);
  rep.bandwidth_bytes_per_s = memory_bandwidth_bytes_per_s(doc.model);
  for (double alpha : doc.characterize_alphas) {
    CharacterizeReport::AlphaRow row;
    row.alpha = alpha;
    row.required_iops =
        required_iops(doc.model.target_qps, doc.model.tables, alpha);
    row.writes_per_day_bytes =
        writes_per_day_bytes(doc.model.target_qps, doc.model.tables, alpha);
    for (const auto& d : doc.platform.devices) {
      if (!d.endurance_bytes_per_day) continue;
      auto v = check_endurance(row.writes_per_day_bytes, d);
      row.endurance.push_back({kind_name(d.kind), v.pass, v.excess_bytes_per_day});
    }
    rep.rows.push_back(std::move(row));
  }
  // Power at full model bandwidth on HBM is the upper bound; report the
  // capacity-resident power with HBM driven at the model's bandwidth demand.
  const MemoryDevice* hbm = doc.platform.find(DeviceKind::HBM);
  double hbm_gbs = 0.0;
  if (hbm)
    hbm_gbs = std::min(rep.bandwidth_bytes_per_s, hbm->bandwidth_bytes_per_s) / kGB;
  rep.platform_power_watts = platform_power_watts(doc.platform, hbm_gbs);
  return rep;
}

inline std::string format_characterize(const CharacterizeReport& r) {
  std::ostringstream os;
  os << "sparse_param_bytes: " << r.sparse_param_bytes << '\n'
     << "capacity_bytes: " << r.capacity_bytes << '\n'
     << "bandwidth_bytes_per_s: " << r.bandwidth_bytes_per_s << '\n';
  for (const auto& row : r.rows) {
    os << "alpha " << row.alpha << ": required_iops=" << row.required_iops
       << " writes_per_day_bytes=" << row.writes_per_day_bytes;
    for (const auto& v : row.endurance)
      os << ' ' << v.device << '='
         << (v.pass ? "pass" : "fail(" + std::to_string(v.excess_bytes_per_day) + ")");
    os << '\n';
  }
  os << "platform_power_watts: " << r.platform_power_watts << '\n';
  return os.str();
}

}  // namespace embsim
