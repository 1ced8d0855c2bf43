#pragma once

// Table-to-device assignment: min-max lookup-time objective over GPU shards,
// an exact branch-and-bound solver for small instances and a greedy heuristic
// for large ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embsim/memmodel.hpp"
#include "embsim/model.hpp"

namespace embsim {

struct PlacementTable {
  std::string id;
  std::uint64_t size_bytes = 0;     // capacity footprint (params + optimizer)
  double bytes_per_query = 0.0;     // D x p x L x 2
};

struct PlacementDevice {
  MemoryDevice device;
  std::uint64_t usable_capacity_bytes = 0;  // capacity minus cache reservations
};

struct PlacementProblem {
  std::vector<PlacementTable> tables;
  std::vector<PlacementDevice> devices;
  std::uint32_t gpu_count = 1;

  void validate() const {
    if (gpu_count < 1) throw std::invalid_argument("gpu_count must be >= 1");
    for (const auto& d : devices) {
      d.device.validate();
      if (d.usable_capacity_bytes > d.device.capacity_bytes)
        throw std::invalid_argument("usable capacity exceeds device capacity");
    }
  }
};

struct Assignment {
  DeviceKind device = DeviceKind::HBM;
  std::uint32_t shard = 0;
};

struct Placement {
  std::map<std::string, Assignment> assignment;
  double objective_seconds_per_query = 0.0;
};

enum class SolveStatus { OK, INFEASIBLE, SIZE_LIMIT };

struct SolveResult {
  SolveStatus status = SolveStatus::OK;
  Placement placement;
};

// Per-shard bandwidth of a device: every device is divided across the GPUs
// that drive it (HBM is a per-GPU split of the platform total; shared devices
// contribute BW / gpu_count to each shard).
inline double shard_bandwidth(const MemoryDevice& d, std::uint32_t gpu_count) {
  return d.bandwidth_bytes_per_s / static_cast<double>(gpu_count);
}

// D x L x p bytes per query moved for one table (one direction).
inline double table_lookup_bytes(const PlacementTable& t) {
  return t.bytes_per_query / 2.0;
}

inline PlacementProblem make_problem(const ModelSpec& model,
                                     const std::vector<PlacementDevice>& devices,
                                     std::uint32_t gpu_count) {
  PlacementProblem p;
  p.gpu_count = gpu_count;
  p.devices = devices;
  for (const auto& t : model.tables) {
    PlacementTable pt;
    pt.id = t.id;
    pt.size_bytes = t.table_bytes();
    pt.bytes_per_query = table_bytes_per_query(t);
    p.tables.push_back(std::move(pt));
  }
  return p;
}

inline std::vector<std::string> validate(const Placement& placement,
                                         const PlacementProblem& problem) {
  std::vector<std::string> violations;
  std::map<DeviceKind, std::uint64_t> used;
  for (const auto& t : problem.tables) {
    auto it = placement.assignment.find(t.id);
    if (it == placement.assignment.end()) {
      violations.push_back("table not assigned: " + t.id);
      continue;
    }
    const Assignment& a = it->second;
    if (a.shard >= problem.gpu_count)
      violations.push_back("table " + t.id + " assigned to invalid shard");
    bool known = false;
    for (const auto& d : problem.devices)
      if (d.device.kind == a.device) known = true;
    if (!known) {
      violations.push_back("table " + t.id + " assigned to absent device " +
                           kind_name(a.device));
      continue;
    }
    used[a.device] += t.size_bytes;
  }
  for (const auto& e : placement.assignment) {
    bool known = false;
    for (const auto& t : problem.tables)
      if (t.id == e.first) known = true;
    if (!known) violations.push_back("assignment for unknown table: " + e.first);
  }
  for (const auto& d : problem.devices) {
    auto it = used.find(d.device.kind);
    if (it != used.end() && it->second > d.usable_capacity_bytes)
      violations.push_back(std::string("capacity exceeded on ") +
                           kind_name(d.device.kind));
  }
  return violations;
}

// Max over shards of the summed per-table transfer times on that shard.
inline double objective(const Placement& placement,
                        const PlacementProblem& problem) {
  auto violations = validate(placement, problem);
  // Capacity violations do not change the value; reject structural ones.
  for (const auto& v : violations)
    if (v.rfind("capacity exceeded", 0) != 0)
      throw std::invalid_argument("invalid placement: " + v);
  std::vector<double> shard_time(problem.gpu_count, 0.0);
  for (const auto& t : problem.tables) {
    const Assignment& a = placement.assignment.at(t.id);
    const MemoryDevice* dev = nullptr;
    for (const auto& d : problem.devices)
      if (d.device.kind == a.device) dev = &d.device;
    shard_time[a.shard] +=
        table_lookup_bytes(t) / shard_bandwidth(*dev, problem.gpu_count);
  }
  double worst = 0.0;
  for (double s : shard_time) worst = std::max(worst, s);
  return worst;
}

namespace detail {

struct SolverState {
  const PlacementProblem* problem;
  std::vector<std::size_t> order;          // table visit order
  std::vector<double> shard_time;
  std::vector<std::uint64_t> device_used;
  std::vector<int> choice;                 // per ordered table: slot index
  std::vector<int> best_choice;
  double best = 0.0;
  bool found = false;
};

inline double slot_cost(const PlacementProblem& p, const PlacementTable& t,
                        std::size_t device_idx) {
  return table_lookup_bytes(t) /
         shard_bandwidth(p.devices[device_idx].device, p.gpu_count);
}

// Depth-first branch and bound; slots enumerated in (device ordinal, shard)
// order so the first optimum found carries the deterministic tie-break.
inline void bnb(SolverState& st, std::size_t depth) {
  const PlacementProblem& p = *st.problem;
  if (depth == st.order.size()) {
    double obj = 0.0;
    for (double s : st.shard_time) obj = std::max(obj, s);
    if (!st.found || obj < st.best) {
      st.found = true;
      st.best = obj;
      st.best_choice = st.choice;
    }
    return;
  }
  double cur_max = 0.0;
  for (double s : st.shard_time) cur_max = std::max(cur_max, s);
  if (st.found && cur_max >= st.best) return;

  const PlacementTable& t = p.tables[st.order[depth]];
  int slot = 0;
  for (std::size_t di = 0; di < p.devices.size(); ++di) {
    for (std::uint32_t g = 0; g < p.gpu_count; ++g, ++slot) {
      if (st.device_used[di] + t.size_bytes >
          p.devices[di].usable_capacity_bytes)
        continue;
      double cost = slot_cost(p, t, di);
      st.device_used[di] += t.size_bytes;
      st.shard_time[g] += cost;
      st.choice[depth] = slot;
      bnb(st, depth + 1);
      st.shard_time[g] -= cost;
      st.device_used[di] -= t.size_bytes;
    }
  }
}

inline Placement choices_to_placement(const PlacementProblem& p,
                                      const std::vector<std::size_t>& order,
                                      const std::vector<int>& choice) {
  Placement out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    int slot = choice[i];
    std::size_t di = slot / p.gpu_count;
    std::uint32_t g = static_cast<std::uint32_t>(slot % p.gpu_count);
    out.assignment[p.tables[order[i]].id] =
        Assignment{p.devices[di].device.kind, g};
  }
  out.objective_seconds_per_query = objective(out, p);
  return out;
}

}  // namespace detail

// Exhaustive optimum via branch and bound. Guarded: the assignment space
// (devices x gpus)^tables must stay within 1e7 combinations.
inline SolveResult solve_exact(const PlacementProblem& problem) {
  problem.validate();
  SolveResult res;
  if (problem.tables.empty()) return res;
  double slots = static_cast<double>(problem.devices.size()) *
                 problem.gpu_count;
  if (slots == 0) {
    res.status = SolveStatus::INFEASIBLE;
    return res;
  }
  if (std::pow(slots, static_cast<double>(problem.tables.size())) > 1e7) {
    res.status = SolveStatus::SIZE_LIMIT;
    return res;
  }
  detail::SolverState st;
  st.problem = &problem;
  st.order.resize(problem.tables.size());
  for (std::size_t i = 0; i < st.order.size(); ++i) st.order[i] = i;
  // Heaviest lookup volume first tightens the bound early.
  std::stable_sort(st.order.begin(), st.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return problem.tables[a].bytes_per_query >
                            problem.tables[b].bytes_per_query;
                   });
  st.shard_time.assign(problem.gpu_count, 0.0);
  st.device_used.assign(problem.devices.size(), 0);
  st.choice.assign(problem.tables.size(), -1);
  detail::bnb(st, 0);
  if (!st.found) {
    res.status = SolveStatus::INFEASIBLE;
    return res;
  }
  res.placement = detail::choices_to_placement(problem, st.order, st.best_choice);
  return res;
}

// Greedy: tables by bytes_per_query descending, each assigned to the feasible
// (device, shard) with the smallest resulting max-shard time.
inline SolveResult solve_greedy(const PlacementProblem& problem) {
  problem.validate();
  SolveResult res;
  std::vector<std::size_t> order(problem.tables.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return problem.tables[a].bytes_per_query >
                            problem.tables[b].bytes_per_query;
                   });
  std::vector<double> shard_time(problem.gpu_count, 0.0);
  std::vector<std::uint64_t> device_used(problem.devices.size(), 0);
  for (std::size_t ti : order) {
    const PlacementTable& t = problem.tables[ti];
    int best_di = -1;
    std::uint32_t best_g = 0;
    double best_obj = 0.0;
    for (std::size_t di = 0; di < problem.devices.size(); ++di) {
      if (device_used[di] + t.size_bytes >
          problem.devices[di].usable_capacity_bytes)
        continue;
      double cost = detail::slot_cost(problem, t, di);
      for (std::uint32_t g = 0; g < problem.gpu_count; ++g) {
        double obj = 0.0;
        for (std::uint32_t s = 0; s < problem.gpu_count; ++s)
          obj = std::max(obj, shard_time[s] + (s == g ? cost : 0.0));
        if (best_di < 0 || obj < best_obj) {
          best_di = static_cast<int>(di);
          best_g = g;
          best_obj = obj;
        }
      }
    }
    if (best_di < 0) {
      res.status = SolveStatus::INFEASIBLE;
      return res;
    }
    device_used[best_di] += t.size_bytes;
    shard_time[best_g] += detail::slot_cost(problem, t, best_di);
    res.placement.assignment[t.id] =
        Assignment{problem.devices[best_di].device.kind, best_g};
  }
  if (!problem.tables.empty())
    res.placement.objective_seconds_per_query =
        objective(res.placement, problem);
  return res;
}

}  // namespace embsim
