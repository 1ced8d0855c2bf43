// Command line front end: characterize, place, gentrace, analyze, simulate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "embsim/config.hpp"
#include "embsim/placement.hpp"
#include "embsim/trainer.hpp"
#include "embsim/workload.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitCapacityDeadlock = 4;
constexpr int kExitIo = 5;
constexpr int kExitSizeLimit = 6;

nlohmann::json placement_to_json(const embsim::Placement& p) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [table, a] : p.assignment)
    assignment[table] = {{"device", embsim::kind_name(a.device)},
                         {"shard", a.shard}};
  return {{"objective_seconds_per_query", p.objective_seconds_per_query},
          {"assignment", assignment}};
}

embsim::Placement placement_from_json(const nlohmann::json& j) {
  embsim::Placement p;
  p.objective_seconds_per_query = j.at("objective_seconds_per_query");
  for (const auto& [table, a] : j.at("assignment").items())
    p.assignment[table] = embsim::Assignment{
        embsim::kind_from_name(a.at("device")), a.at("shard")};
  return p;
}

int run_characterize(const std::string& config_path) {
  auto doc = embsim::load_config(config_path);
  std::cout << embsim::format_characterize(embsim::characterize(doc));
  return 0;
}

int run_place(const std::string& config_path, bool greedy,
              const std::string& out_path) {
  auto doc = embsim::load_config(config_path);
  std::vector<embsim::PlacementDevice> devices;
  for (const auto& d : doc.platform.devices)
    devices.push_back({d, d.capacity_bytes});
  auto problem =
      embsim::make_problem(doc.model, devices, doc.platform.gpu_count);
  auto result = greedy ? embsim::solve_greedy(problem)
                       : embsim::solve_exact(problem);
  if (result.status == embsim::SolveStatus::INFEASIBLE) {
    std::cerr << "placement infeasible: no capacity-feasible assignment\n";
    return kExitInfeasible;
  }
  if (result.status == embsim::SolveStatus::SIZE_LIMIT) {
    std::cerr << "instance too large for the exact solver; use --greedy\n";
    return kExitSizeLimit;
  }
  nlohmann::json out = placement_to_json(result.placement);
  if (out_path.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::ofstream f(out_path);
    if (!f) {
      std::cerr << "cannot write " << out_path << '\n';
      return kExitIo;
    }
    f << out.dump(2) << '\n';
  }
  return 0;
}

int run_gentrace(const std::string& config_path, const std::string& out_path,
                 std::optional<std::uint64_t> seed) {
  auto doc = embsim::load_config(config_path);
  if (!doc.trace) {
    std::cerr << "config has no /trace section\n";
    return kExitUsage;
  }
  embsim::TraceSpec spec = *doc.trace;
  if (seed) spec.seed = *seed;
  embsim::Trace trace = embsim::generate(doc.model, spec);
  embsim::save(trace, out_path);
  return 0;
}

int run_analyze(const std::string& config_path, const std::string& trace_path,
                const std::string& out_path) {
  auto doc = embsim::load_config(config_path);
  embsim::Trace trace = embsim::load(trace_path);
  embsim::LocalityReport report = embsim::analyze(trace, doc.model);
  if (out_path.empty()) {
    for (const auto& t : report.tables) {
      std::cout << t.table_id << ": accesses=" << t.total_accesses
                << " distinct=" << t.distinct_indices
                << " mass@20%=" << t.mass_at_index_fraction(0.2) << '\n';
    }
  } else {
    embsim::write_locality_csv(report, out_path);
  }
  return 0;
}

int run_simulate(const std::string& config_path, const std::string& trace_path,
                 const std::string& placement_path, const std::string& out_path,
                 const std::string& format, std::optional<std::uint64_t> seed) {
  auto doc = embsim::load_config(config_path);
  embsim::Trace trace = embsim::load(trace_path);

  embsim::RunConfig rc;
  rc.model = doc.model;
  rc.cache = doc.cache;
  rc.store = doc.store;
  rc.init = doc.init;
  rc.pipeline = doc.pipeline;
  rc.update = doc.update;
  rc.platform = doc.platform;
  rc.compute_seconds_per_batch = doc.compute_seconds_per_batch;
  if (seed) {
    rc.init.seed = *seed;
    rc.update.seed = *seed;
  }

  if (placement_path.empty()) {
    // No placement given: everything on the first block device, or HBM.
    embsim::DeviceKind fallback = embsim::DeviceKind::HBM;
    for (const auto& d : doc.platform.devices)
      if (embsim::is_block_kind(d.kind)) fallback = d.kind;
    for (const auto& t : doc.model.tables)
      rc.placement.assignment[t.id] = embsim::Assignment{fallback, 0};
  } else {
    std::ifstream in(placement_path);
    if (!in) {
      std::cerr << "cannot open placement: " << placement_path << '\n';
      return kExitIo;
    }
    rc.placement = placement_from_json(nlohmann::json::parse(in));
  }

  auto result = embsim::run(rc, trace);
  embsim::ReportFormat fmt = format == "csv" ? embsim::ReportFormat::Csv
                                             : embsim::ReportFormat::Json;
  if (out_path.empty()) {
    if (fmt == embsim::ReportFormat::Json)
      std::cout << embsim::report_to_json(result.metrics).dump(2) << '\n';
    else
      std::cout << embsim::report_to_csv(result.metrics);
  } else {
    embsim::report_write(result.metrics, out_path, fmt);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous-memory embedding storage simulator"};
  app.require_subcommand(1);

  std::string config_path, trace_path, placement_path, out_path;
  std::string format = "json";
  std::uint64_t seed_value = 0;
  bool greedy = false, exact = false;

  auto* characterize =
      app.add_subcommand("characterize", "closed-form feasibility analysis");
  characterize->add_option("--config", config_path, "config JSON")->required();

  auto* place = app.add_subcommand("place", "solve table placement");
  place->add_option("--config", config_path, "config JSON")->required();
  place->add_option("--out", out_path, "placement output path");
  place->add_flag("--greedy", greedy, "use the greedy heuristic");
  place->add_flag("--exact", exact, "use the exact solver (default)");

  auto* gentrace = app.add_subcommand("gentrace", "generate a workload trace");
  gentrace->add_option("--config", config_path, "config JSON")->required();
  gentrace->add_option("--out", out_path, "trace output path")->required();
  auto* gseed = gentrace->add_option("--seed", seed_value, "override trace seed");

  auto* analyze = app.add_subcommand("analyze", "locality analysis of a trace");
  analyze->add_option("--config", config_path, "config JSON")->required();
  analyze->add_option("--trace", trace_path, "trace path")->required();
  analyze->add_option("--out", out_path, "CSV output path");

  auto* simulate = app.add_subcommand("simulate", "trace-driven training run");
  simulate->add_option("--config", config_path, "config JSON")->required();
  simulate->add_option("--trace", trace_path, "trace path")->required();
  simulate->add_option("--placement", placement_path, "placement JSON");
  simulate->add_option("--out", out_path, "report output path");
  simulate->add_option("--format", format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  auto* sseed = simulate->add_option("--seed", seed_value, "override seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (characterize->parsed()) return run_characterize(config_path);
    if (place->parsed()) return run_place(config_path, greedy && !exact, out_path);
    if (gentrace->parsed())
      return run_gentrace(config_path, out_path,
                          gseed->count() ? std::optional(seed_value)
                                         : std::nullopt);
    if (analyze->parsed())
      return run_analyze(config_path, trace_path, out_path);
    if (simulate->parsed())
      return run_simulate(config_path, trace_path, placement_path, out_path,
                          format,
                          sseed->count() ? std::optional(seed_value)
                                         : std::nullopt);
  } catch (const embsim::CapacityDeadlock& e) {
    std::cerr << "capacity deadlock: " << e.what() << '\n';
    return kExitCapacityDeadlock;
  } catch (const embsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
