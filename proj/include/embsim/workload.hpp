#pragma once

// Trace generation with power-law temporal locality, locality analysis
// (frequency CDF + reuse distances), and a JSONL trace format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "embsim/model.hpp"

namespace embsim {

struct IndexDistribution {
  enum class Kind { Zipf, TopHeavy };
  Kind kind = Kind::TopHeavy;
  double zipf_s = 1.0;
  double hot_fraction = 0.2;  // fraction of indices that are hot
  double hot_mass = 0.8;      // fraction of accesses landing on them

  void validate() const {
    if (kind == Kind::Zipf) {
      if (!(zipf_s > 0.0)) throw std::invalid_argument("zipf s must be > 0");
    } else {
      if (!(hot_fraction > 0.0 && hot_fraction < 1.0))
        throw std::invalid_argument("hot_fraction must be in (0, 1)");
      if (!(hot_mass < 1.0 && hot_mass >= hot_fraction))
        throw std::invalid_argument(
            "hot_mass must satisfy hot_fraction <= hot_mass < 1");
    }
  }
};

struct TraceSpec {
  std::uint64_t num_batches = 1;
  std::uint32_t batch_size = 1;  // samples per batch
  std::uint64_t seed = 0;
  IndexDistribution default_dist;
  std::map<std::string, IndexDistribution> per_table;

  const IndexDistribution& dist_for(const std::string& id) const {
    auto it = per_table.find(id);
    return it == per_table.end() ? default_dist : it->second;
  }

  void validate() const {
    if (num_batches < 1) throw std::invalid_argument("num_batches must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    default_dist.validate();
    for (const auto& e : per_table) e.second.validate();
  }
};

struct TraceBatch {
  // Parallel to Trace::table_ids.
  std::vector<std::vector<std::uint64_t>> lookups;

  bool operator==(const TraceBatch&) const = default;
};

struct Trace {
  std::vector<std::string> table_ids;
  std::uint32_t batch_size = 1;
  std::uint64_t seed = 0;
  std::vector<TraceBatch> batches;

  bool operator==(const Trace&) const = default;
};

namespace detail {

// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::uint64_t> permutation(std::uint64_t n,
                                              std::uint64_t seed) {
  std::vector<std::uint64_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = n; i > 1; --i) {
    std::uint64_t j = rng() % i;
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

struct TableSampler {
  const IndexDistribution* dist;
  std::uint64_t rows;
  std::vector<std::uint64_t> perm;   // rank -> row index
  std::vector<double> zipf_cdf;      // Zipf only
  std::uint64_t hot_count = 0;       // TopHeavy only

  std::uint64_t sample(std::mt19937_64& rng) const {
    if (dist->kind == IndexDistribution::Kind::Zipf) {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      auto it = std::lower_bound(zipf_cdf.begin(), zipf_cdf.end(), u);
      std::uint64_t rank = it == zipf_cdf.end()
                               ? rows - 1
                               : static_cast<std::uint64_t>(it - zipf_cdf.begin());
      return perm[rank];
    }
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::uint64_t rank;
    if (u < dist->hot_mass && hot_count > 0) {
      rank = rng() % hot_count;
    } else {
      std::uint64_t cold = rows - hot_count;
      rank = cold == 0 ? rng() % rows : hot_count + rng() % cold;
    }
    return perm[rank];
  }
};

}  // namespace detail

// Per-table per-batch index count is round(batch_size x pooling). Hot rows
// are scattered by a seeded permutation, so popularity carries no spatial
// pattern.
inline Trace generate(const ModelSpec& model, const TraceSpec& spec) {
  model.validate();
  spec.validate();
  Trace trace;
  trace.batch_size = spec.batch_size;
  trace.seed = spec.seed;
  std::vector<detail::TableSampler> samplers;
  std::vector<std::uint64_t> counts;
  for (const auto& t : model.tables) {
    trace.table_ids.push_back(t.id);
    detail::TableSampler s;
    s.dist = &spec.dist_for(t.id);
    s.rows = t.rows;
    s.perm = detail::permutation(t.rows, mix64(spec.seed, fnv1a(t.id)));
    if (s.dist->kind == IndexDistribution::Kind::Zipf) {
      s.zipf_cdf.resize(t.rows);
      double acc = 0.0;
      for (std::uint64_t r = 0; r < t.rows; ++r) {
        acc += 1.0 / std::pow(static_cast<double>(r + 1), s.dist->zipf_s);
        s.zipf_cdf[r] = acc;
      }
      for (auto& v : s.zipf_cdf) v /= acc;
    } else {
      s.hot_count = static_cast<std::uint64_t>(
          std::ceil(s.dist->hot_fraction * static_cast<double>(t.rows)));
      if (s.hot_count == 0) s.hot_count = 1;
      if (s.hot_count > t.rows) s.hot_count = t.rows;
    }
    samplers.push_back(std::move(s));
    counts.push_back(static_cast<std::uint64_t>(
        std::llround(static_cast<double>(spec.batch_size) * t.pooling)));
  }
  std::mt19937_64 rng(splitmix64(spec.seed));
  trace.batches.resize(spec.num_batches);
  for (auto& batch : trace.batches) {
    batch.lookups.resize(model.tables.size());
    for (std::size_t ti = 0; ti < model.tables.size(); ++ti) {
      auto& out = batch.lookups[ti];
      out.reserve(counts[ti]);
      for (std::uint64_t k = 0; k < counts[ti]; ++k)
        out.push_back(samplers[ti].sample(rng));
    }
  }
  return trace;
}

struct TableLocality {
  std::string table_id;
  std::uint64_t total_rows = 0;       // H
  std::uint64_t total_accesses = 0;
  std::uint64_t distinct_indices = 0;
  std::vector<std::uint64_t> sorted_counts;     // per-index counts, descending
  std::vector<std::uint64_t> reuse_histogram;   // log2 buckets; last = cold

  // Fraction of accesses captured by the most popular `frac` of all indices.
  double mass_at_index_fraction(double frac) const {
    if (total_accesses == 0) return 0.0;
    std::uint64_t take = static_cast<std::uint64_t>(
        std::floor(frac * static_cast<double>(total_rows) + 1e-9));
    std::uint64_t covered = 0;
    for (std::uint64_t i = 0; i < take && i < sorted_counts.size(); ++i)
      covered += sorted_counts[i];
    return static_cast<double>(covered) / static_cast<double>(total_accesses);
  }

  // CDF sampled at `points + 1` evenly spaced index fractions.
  std::vector<std::pair<double, double>> cdf(std::size_t points = 100) const {
    std::vector<std::pair<double, double>> out;
    out.reserve(points + 1);
    for (std::size_t i = 0; i <= points; ++i) {
      double f = static_cast<double>(i) / static_cast<double>(points);
      out.emplace_back(f, mass_at_index_fraction(f));
    }
    return out;
  }
};

struct LocalityReport {
  std::vector<TableLocality> tables;
};

namespace detail {

// Fenwick tree over access positions, for distinct-count reuse distances.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i, int delta) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
  }
  std::int64_t prefix(std::size_t i) const {  // sum of [0, i)
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace detail

inline LocalityReport analyze(const Trace& trace, const ModelSpec& model) {
  LocalityReport report;
  for (std::size_t ti = 0; ti < trace.table_ids.size(); ++ti) {
    TableLocality loc;
    loc.table_id = trace.table_ids[ti];
    loc.total_rows = model.tables[model.table_index(loc.table_id)].rows;

    std::vector<std::uint64_t> stream;
    for (const auto& batch : trace.batches)
      for (std::uint64_t idx : batch.lookups[ti]) stream.push_back(idx);
    loc.total_accesses = stream.size();

    std::unordered_map<std::uint64_t, std::uint64_t> freq;
    for (std::uint64_t idx : stream) ++freq[idx];
    loc.distinct_indices = freq.size();
    loc.sorted_counts.reserve(freq.size());
    for (const auto& e : freq) loc.sorted_counts.push_back(e.second);
    std::sort(loc.sorted_counts.rbegin(), loc.sorted_counts.rend());

    // Reuse distance = distinct indices touched since the previous access.
    loc.reuse_histogram.assign(66, 0);
    detail::Fenwick bit(stream.size());
    std::unordered_map<std::uint64_t, std::size_t> last_pos;
    for (std::size_t pos = 0; pos < stream.size(); ++pos) {
      auto it = last_pos.find(stream[pos]);
      if (it == last_pos.end()) {
        ++loc.reuse_histogram.back();  // cold
      } else {
        std::int64_t dist =
            bit.prefix(pos) - bit.prefix(it->second + 1);
        std::size_t bucket =
            dist <= 0 ? 0
                      : static_cast<std::size_t>(std::floor(std::log2(
                            static_cast<double>(dist)))) + 1;
        if (bucket > 64) bucket = 64;
        ++loc.reuse_histogram[bucket];
        bit.add(it->second, -1);
      }
      bit.add(pos, 1);
      last_pos[stream[pos]] = pos;
    }
    report.tables.push_back(std::move(loc));
  }
  return report;
}

// ---- JSONL trace format -----------------------------------------------------
// Record 1: header {"format": "embsim-trace", "version": 1, ...}
// Then one record per batch: {"batch": n, "lookups": {"<table_id>": [i, ...]}}

inline void save(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file for write: " + path);
  nlohmann::json header = {
      {"format", "embsim-trace"},
      {"version", 1},
      {"batch_size", trace.batch_size},
      {"seed", trace.seed},
      {"num_batches", trace.batches.size()},
      {"tables", trace.table_ids},
  };
  out << header.dump() << '\n';
  for (std::size_t b = 0; b < trace.batches.size(); ++b) {
    nlohmann::json lookups = nlohmann::json::object();
    for (std::size_t ti = 0; ti < trace.table_ids.size(); ++ti)
      lookups[trace.table_ids[ti]] = trace.batches[b].lookups[ti];
    nlohmann::json rec = {{"batch", b}, {"lookups", std::move(lookups)}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Trace load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": missing header record");
  Trace trace;
  std::uint64_t declared_batches = 0;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.at("format") != "embsim-trace" || header.at("version") != 1)
      throw std::runtime_error("unsupported trace format/version");
    trace.batch_size = header.at("batch_size").get<std::uint32_t>();
    trace.seed = header.at("seed").get<std::uint64_t>();
    declared_batches = header.at("num_batches").get<std::uint64_t>();
    trace.table_ids = header.at("tables").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad header record: " + e.what());
  }
  std::uint64_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    TraceBatch batch;
    batch.lookups.resize(trace.table_ids.size());
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      if (rec.at("batch").get<std::uint64_t>() != record - 1)
        throw std::runtime_error("out-of-order batch number");
      const auto& lookups = rec.at("lookups");
      for (std::size_t ti = 0; ti < trace.table_ids.size(); ++ti)
        batch.lookups[ti] =
            lookups.at(trace.table_ids[ti]).get<std::vector<std::uint64_t>>();
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": bad batch record " +
                               std::to_string(record) + ": " + e.what());
    }
    trace.batches.push_back(std::move(batch));
  }
  if (trace.batches.size() != declared_batches)
    throw std::runtime_error(
        path + ": truncated trace: header declares " +
        std::to_string(declared_batches) + " batches, found " +
        std::to_string(trace.batches.size()) + " (last record " +
        std::to_string(record) + ")");
  return trace;
}

inline void write_locality_csv(const LocalityReport& report,
                               const std::string& path,
                               std::size_t points = 100) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open csv for write: " + path);
  out << "table_id,frac_indices,frac_accesses\n";
  for (const auto& t : report.tables)
    for (const auto& [f, m] : t.cdf(points))
      out << t.table_id << ',' << f << ',' << m << '\n';
}

}  // namespace embsim
