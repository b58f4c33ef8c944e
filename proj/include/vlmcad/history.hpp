#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlmcad/design_point.hpp"
#include "vlmcad/spec_model.hpp"

namespace vlmcad {

// One evaluated design. `worker` is -1 outside the numerical optimizer.
struct HistoryEntry {
  std::string phase;  // "D", "E1" (feasibility stage), "E2" (power stage), ...
  int iteration = 0;
  int worker = -1;
  DesignPoint point;
  double j = 0.0;
  CostBreakdown breakdown;
  std::optional<Measurements> measured;  // raw simulator values, when recorded
};

using History = std::vector<HistoryEntry>;

// Line-delimited JSON, one record per evaluation, keys in a fixed order:
// {"phase","iteration","worker","params":{...},"j","breakdown":{"power","violations":{...},"sanity","mode"},
//  "measured":{"metrics":{...},"power","dc_ok","converged"}}   (measured is optional)
std::string history_to_jsonl(const History& h);
History history_from_jsonl(const std::string& text);
void write_history(const std::string& path, const History& h);
History read_history(const std::string& path);

// Lowest-J entries, exact-parameter duplicates removed, ties kept in
// history order; at most k entries.
History select_seeds(const History& h, std::size_t k);

// Index of the lowest J (earliest on ties), if any.
std::optional<std::size_t> best_index(const History& h);

}  // namespace vlmcad
