#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlmcad/agents.hpp"
#include "vlmcad/netlist.hpp"
#include "vlmcad/sensitivity.hpp"
#include "vlmcad/spec_model.hpp"

namespace vlmcad {

struct PhaseOutcome {
  std::string phase;  // B, C, D, E
  int iterations = 0;
  int budget = 0;
  double wall_s = 0.0;
  std::optional<double> best_j;
  std::string note;
};

nlohmann::json to_json(const PhaseOutcome& p);
PhaseOutcome phase_from_json(const nlohmann::json& j);

struct FinalReport {
  std::string circuit;
  std::vector<std::string> params;  // every free parameter, netlist order
  DesignPoint best;
  double best_j = 0.0;
  CostBreakdown breakdown;
  std::optional<Measurements> measured;
  SpecSet specs;
  ParamRanges ranges;
  MatchingGroups groups;
  SensitivityReport sensitivity;  // over the optimizer's search parameters
  std::map<std::string, ParamClass> classes;
  std::map<std::string, std::string> explanations;
  std::vector<PhaseOutcome> phases;
};

// Top quartile (at least one parameter) of the global ranking is
// stability-critical, of the elite ranking performance-tuning. Matched
// parameters take the class of their group's canonical member.
std::map<std::string, ParamClass> classify(const SensitivityReport& s, const MatchingGroups& g,
                                           const std::vector<std::string>& params);

// Markdown document: parameter table, spec compliance, both sensitivity
// tables, explanations and phase accounting.
std::string render_report(const FinalReport& r);

}  // namespace vlmcad
