#include "vlmcad/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vlmcad/bench.hpp"
#include "vlmcad/config.hpp"
#include "vlmcad/error.hpp"
#include "vlmcad/workflow.hpp"

namespace fs = std::filesystem;

namespace vlmcad {

using nlohmann::json;

namespace {

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string transport;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool needs_out) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->required();
  auto* o = cmd->add_option("--out", f.out, "Run directory for artifacts");
  if (needs_out) o->required();
  cmd->add_option("--seed", f.seed, "Random seed, overrides the config");
  cmd->add_option("--backend", f.backend, "surrogate or ngspice")->check(CLI::IsMember({"surrogate", "ngspice"}));
  cmd->add_option("--transport", f.transport, "scripted or endpoint")->check(CLI::IsMember({"scripted", "endpoint"}));
}

RunConfig load_with_overrides(const RunFlags& f) {
  auto cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.backend.empty()) cfg.backend = backend_from_string(f.backend);
  if (!f.transport.empty()) {
    cfg.transport = transport_from_string(f.transport);
    if (cfg.transport == TransportKind::Endpoint && (cfg.endpoint.url.empty() || cfg.endpoint.model.empty())) {
      throw ConfigError("transport.endpoint needs url and model for the endpoint transport");
    }
  }
  return cfg;
}

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_phase(std::ostream& out, const PhaseOutcome& p) {
  out << "phase " << p.phase << ": " << p.iterations << "/" << p.budget << " iterations";
  if (p.best_j) out << ", best J " << fmt(*p.best_j);
  out << ", " << p.note << "\n";
}

int finish(std::ostream& out, const FinalReport& r, const std::string& run_dir) {
  out << "final J " << fmt(r.best_j) << "\n";
  if (!run_dir.empty()) out << "report " << (fs::path(run_dir) / "report.md").string() << "\n";
  return r.best_j <= 1.0 ? kExitOk : kExitInfeasible;
}

int cmd_analyze(const RunFlags& f, std::ostream& out) {
  auto cfg = load_with_overrides(f);
  auto backend = make_backend(cfg);
  auto transport = make_transport(cfg);
  Workflow wf(cfg, *backend, *transport, f.out);
  print_phase(out, wf.run_phase_b());
  const auto& st = wf.state();
  out << "free parameters:";
  for (const auto& p : st.mandatory) out << " " << p;
  out << "\n";
  for (const auto& g : st.groups.groups) {
    out << "matched:";
    for (const auto& m : g.members) out << " " << m;
    out << " (" << g.rationale << ")\n";
  }
  return kExitOk;
}

int cmd_size(const RunFlags& f, std::ostream& out) {
  auto cfg = load_with_overrides(f);
  auto backend = make_backend(cfg);
  auto transport = make_transport(cfg);
  Workflow wf(cfg, *backend, *transport, f.out);
  auto r = wf.run_all();
  for (const auto& p : wf.state().phases) print_phase(out, p);
  return finish(out, r, f.out);
}

int cmd_optimize(const RunFlags& f, const std::string& seeds_path, std::ostream& out) {
  auto cfg = load_with_overrides(f);
  if (!fs::exists(seeds_path)) throw ConfigError("seed file '" + seeds_path + "' does not exist");
  History seeds = read_history(seeds_path);
  auto backend = make_backend(cfg);
  auto transport = make_transport(cfg);
  Workflow wf(cfg, *backend, *transport, f.out);
  wf.run_phase_b();
  // Seed entries are replayed as Phase D history so the advisor can pick from them.
  for (auto& e : seeds) {
    e.phase = "D";
    e.worker = -1;
    wf.state().history.push_back(e);
  }
  if (auto b = best_index(wf.state().history)) wf.state().point = wf.state().history[*b].point;
  print_phase(out, wf.run_phase_e());
  auto& st = wf.state();
  st.report = build_report(cfg, st.history, st.mandatory, st.groups, st.search_names, st.explanations, st.phases);
  std::ofstream(fs::path(f.out) / "report.md") << render_report(*st.report);
  return finish(out, *st.report, f.out);
}

int cmd_report(const std::string& run_dir, const std::string& output, std::ostream& out) {
  if (!fs::is_directory(run_dir)) throw ConfigError("run directory '" + run_dir + "' does not exist");
  const std::string doc = regenerate_report(run_dir);
  if (output.empty()) {
    out << doc;
  } else {
    std::ofstream f(output, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + output + "'");
    f << doc;
  }
  return kExitOk;
}

int cmd_bench(int dim, int runs, std::uint64_t seed, int budget, std::ostream& out) {
  auto s = warm_vs_cold(dim, runs, seed, budget);
  out << "narrow basin, D=" << dim << ", budget " << budget << "\n";
  for (const auto& r : s.runs) out << "seed " << r.seed << ": warm " << r.warm << ", cold " << r.cold << "\n";
  out << "median evaluations to feasibility: warm " << s.median_warm << ", cold " << s.median_cold << "\n";
  return kExitOk;
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// The file holds {"specs": ..., "measured": ...} or {"specs": ..., "cases": [{"name", "measured"}]}.
// A case may carry its own specs; --config supplies specs for files without any.
int cmd_check_cost(const std::string& path, const std::string& config, std::ostream& out) {
  json j = read_json(path);
  if (!j.is_object()) throw ConfigError("'" + path + "' must hold a JSON object");
  std::optional<SpecSet> shared;
  if (j.contains("specs")) {
    shared = specs_from_json(j["specs"]);
  } else if (!config.empty()) {
    shared = load_config(config).specs;
  }
  auto cost = [&](const json& c) {
    SpecSet specs;
    if (c.contains("specs")) {
      specs = specs_from_json(c["specs"]);
    } else if (shared) {
      specs = *shared;
    } else {
      throw ConfigError("no specs given: add a specs section or pass --config");
    }
    if (!c.contains("measured")) throw ConfigError("missing key measured");
    return universal_cost(measurements_from_json(c["measured"]), specs).total;
  };
  if (j.contains("cases")) {
    if (!j["cases"].is_array()) throw ConfigError("cases must be an array");
    for (const auto& c : j["cases"]) {
      out << c.value("name", std::string("case")) << " " << fmt(cost(c), "%.3f") << "\n";
    }
  } else {
    out << fmt(cost(j), "%.3f") << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Agent-driven analog sizing with a warm-started trust-region optimizer", "vlmcad"};
  app.require_subcommand(1);

  RunFlags analyze_f, size_f, opt_f;
  auto* analyze = app.add_subcommand("analyze", "Topology analysis and matching only");
  add_run_flags(analyze, analyze_f, false);
  auto* size = app.add_subcommand("size", "Full sizing run");
  add_run_flags(size, size_f, true);
  auto* optimize_cmd = app.add_subcommand("optimize", "Optimizer and sign-off from a seed history");
  add_run_flags(optimize_cmd, opt_f, true);
  std::string seeds_path;
  optimize_cmd->add_option("--seeds", seeds_path, "History file (JSON lines) with candidate seeds")->required();

  auto* report = app.add_subcommand("report", "Re-render the report of a finished run");
  std::string run_dir, report_out;
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--output", report_out, "Write here instead of standard output");

  auto* bench = app.add_subcommand("bench", "Warm versus cold start on a synthetic narrow basin");
  int dim = 20, runs = 10, budget = 400;
  std::uint64_t bench_seed = 0;
  bench->add_option("--dim", dim)->check(CLI::PositiveNumber);
  bench->add_option("--runs", runs)->check(CLI::PositiveNumber);
  bench->add_option("--budget", budget)->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed);

  auto* check = app.add_subcommand("check-cost", "Universal cost of recorded measurements");
  std::string meas_path, check_config;
  check->add_option("measurements", meas_path, "Measurements file (JSON)")->required();
  check->add_option("--config", check_config, "Run configuration to take the specs from");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*analyze) return cmd_analyze(analyze_f, out);
    if (*size) return cmd_size(size_f, out);
    if (*optimize_cmd) return cmd_optimize(opt_f, seeds_path, out);
    if (*report) return cmd_report(run_dir, report_out, out);
    if (*bench) return cmd_bench(dim, runs, bench_seed, budget, out);
    if (*check) return cmd_check_cost(meas_path, check_config, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const BackendError& e) {
    err << "simulator error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace vlmcad
