#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vlmcad/agents.hpp"
#include "vlmcad/config.hpp"
#include "vlmcad/history.hpp"
#include "vlmcad/netlist.hpp"
#include "vlmcad/report.hpp"
#include "vlmcad/schematic.hpp"
#include "vlmcad/sim_harness.hpp"

namespace vlmcad {

struct Evaluation {
  Measurements measured;
  CostBreakdown cost;
};

struct RunState {
  NetlistTemplate netlist;
  std::string graph_summary;
  std::optional<ConsistencyReport> consistency;
  std::vector<std::string> mandatory;
  MatchingGroups groups;
  std::string explanation;
  DcGoals goals;
  DesignPoint initial;
  DesignPoint point;  // latest accepted proposal
  std::size_t discrepancies = 0;
  History history;
  Transcript transcript;
  std::vector<PhaseOutcome> phases;
  std::vector<std::string> search_names;  // free, untied parameters the optimizer moves
  std::map<std::string, std::string> explanations;
  std::optional<double> best_j_before_e;
  std::optional<FinalReport> report;
};

// Phase B (analysis) -> C (DC sizing) -> D (spec sizing) -> E (optimizer and
// sign-off). Every phase respects its budget; running out is not an error.
class Workflow {
 public:
  // run_dir may be empty, in which case nothing is written.
  Workflow(RunConfig cfg, SimBackend& backend, Transport& transport, std::string run_dir = "");

  PhaseOutcome run_phase_b();
  PhaseOutcome run_phase_c();
  PhaseOutcome run_phase_d();
  PhaseOutcome run_phase_e();
  FinalReport run_all();

  // instantiate -> run_full -> universal cost, memoized per design point.
  Evaluation evaluate(const DesignPoint& p);
  // Adds fixed-range parameters, clamps and applies matching.
  DesignPoint complete(const DesignPoint& p) const;

  RunState& state() { return st_; }
  const RunState& state() const { return st_; }
  const RunConfig& config() const { return cfg_; }
  const std::string& run_dir() const { return run_dir_; }

 private:
  AgentContext context() const;
  CallResult ask(AgentRole role, const AgentContext& ctx);
  void write_netlist(const std::string& name, const DesignPoint& p) const;
  void persist() const;

  RunConfig cfg_;
  SimBackend& backend_;
  Transport& transport_;
  std::string run_dir_;
  RunState st_;
  std::mt19937_64 rng_;
  bool phase_b_done_ = false;
  mutable std::mutex cache_mu_;
  std::map<DesignPoint, Evaluation> cache_;
};

std::unique_ptr<SimBackend> make_backend(const RunConfig& cfg);
std::unique_ptr<Transport> make_transport(const RunConfig& cfg);

// Supply voltage from the `vdd` parameter default or the supply source card.
double supply_voltage(const NetlistTemplate& t, const std::string& supply_node);

// Sensitivity over the optimizer's evaluations in a history (phases E*).
SensitivityReport history_sensitivity(const History& h, const std::vector<std::string>& search_names,
                                      const ParamRanges& ranges, double elite_fraction, int restarts,
                                      std::uint64_t seed);

// Assembles the final report from persisted pieces; used by both a live run
// and regeneration so that the two documents agree byte for byte.
FinalReport build_report(const RunConfig& cfg, const History& h, const std::vector<std::string>& mandatory,
                         const MatchingGroups& groups, const std::vector<std::string>& search_names,
                         const std::map<std::string, std::string>& explanations,
                         const std::vector<PhaseOutcome>& phases);

// Re-renders report.md content from a run directory. Never simulates.
std::string regenerate_report(const std::string& run_dir);

}  // namespace vlmcad
