#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "vlmcad/agents.hpp"
#include "vlmcad/exturbo.hpp"
#include "vlmcad/netlist.hpp"
#include "vlmcad/ngspice.hpp"
#include "vlmcad/sim_harness.hpp"
#include "vlmcad/spec_model.hpp"
#include "vlmcad/surrogate.hpp"

namespace vlmcad {

struct Budgets {
  int phase_c = 10;            // DC sizing iterations
  int phase_d = 40;            // spec sizing iterations
  double phase_d_target = 0.5;
  int phase_e = 400;           // optimizer feasibility stage
  int phase_e_power = 40;      // optimizer power stage
  double phase_e_target = 0.5;
  int workers = 3;
  std::size_t seeds = 3;
  int batch_size = 4;

  void validate() const;
};

enum class BackendKind { Surrogate, Ngspice };
enum class TransportKind { Scripted, Endpoint };

BackendKind backend_from_string(const std::string& s);
TransportKind transport_from_string(const std::string& s);
std::string to_string(BackendKind b);
std::string to_string(TransportKind t);

struct RunConfig {
  std::string config_path;
  std::string netlist_path;  // resolved against the config file directory
  std::optional<std::string> schematic_path;
  SpecSet specs;
  ParamRanges ranges;

  BackendKind backend = BackendKind::Surrogate;
  SurrogateRoles roles;
  SurrogateProcess process;
  NgspiceConfig ngspice;

  TransportKind transport = TransportKind::Scripted;
  EndpointConfig endpoint;

  Budgets budgets;
  std::size_t history_window = 8;
  int retries = 3;
  std::string width_prefix = "w";
  KnobTable knobs;
  BiasCheck bias;
  double dc_tolerance = 0.10;
  double elite_fraction = 0.15;
  int sensitivity_restarts = 5;
  ExturboConfig optimizer;  // budgets, workers and seed are filled from the fields above
  bool keep_netlists = true;
  std::uint64_t seed = 0;

  nlohmann::json raw;  // the parsed file, persisted into the run directory
};

// Throws ConfigError naming the offending key or file.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir);
RunConfig load_config(const std::string& path);

// The `specs` section on its own, as used by check-cost.
SpecSet specs_from_json(const nlohmann::json& j);
// {"metrics": {name: value}, "power": x, "dc_ok": bool, "converged": bool}.
// dc_ok and converged default to true; power may be null.
Measurements measurements_from_json(const nlohmann::json& j);

}  // namespace vlmcad
