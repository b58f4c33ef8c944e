#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vlmcad/design_point.hpp"

namespace vlmcad {

struct Placeholder {
  std::string name;
  // Set by a `.param name=value` card. Placeholders with a default are
  // testbench constants and are not mandatory.
  std::optional<std::string> default_text;
};

struct Device {
  std::string name;
  char kind = '?';  // upper-case SPICE card letter
  std::vector<std::string> nodes;
  std::string model;  // MOSFET/diode model or subcircuit name; empty otherwise
  std::vector<std::pair<std::string, std::string>> params;  // key=value tokens, keys lower-case
  std::string value;  // leading positional value for R/C/L/V/I cards

  std::optional<std::string> param(std::string_view key) const;
};

class NetlistTemplate {
 public:
  std::string raw_text;
  std::vector<Placeholder> params;  // appearance order
  std::vector<Device> devices;
  std::set<std::string> nodes;
  // `.model name type` cards, used to classify MOSFET polarity.
  std::vector<std::pair<std::string, std::string>> models;

  const Placeholder* find_param(std::string_view name) const;
  const Device* find_device(std::string_view name) const;
  // Lower-case .model type for a model name ("nmos", "pmos", ...), if declared.
  std::optional<std::string> model_type(std::string_view model) const;
};

struct ParamRange {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  std::string unit;      // um, nm, pF, V, uA, ... (drives the SPICE suffix)
  bool integer = false;  // e.g. device multipliers

  bool fixed() const { return min == max; }
};

class ParamRanges {
 public:
  std::vector<ParamRange> entries;

  const ParamRange* find(std::string_view name) const;
  void validate() const;
};

struct MatchingGroup {
  std::vector<std::string> members;  // members.front() is canonical
  std::string rationale;
};

struct MatchingGroups {
  std::vector<MatchingGroup> groups;

  // Groups disjoint, non-empty, and every member a template placeholder.
  void validate(const NetlistTemplate& t) const;
  // Members that are overwritten by their group's canonical value.
  std::set<std::string> tied_members() const;
  const MatchingGroup* group_of(std::string_view name) const;
};

struct ClampResult {
  DesignPoint point;
  std::vector<std::string> clipped;  // keys whose value changed
};

NetlistTemplate parse_netlist(std::string_view text);
NetlistTemplate load_netlist(const std::string& path);

// Free placeholders in appearance order, each once.
std::vector<std::string> mandatory_params(const NetlistTemplate& t);
// As above, also excluding parameters the ranges mark as fixed.
std::vector<std::string> mandatory_params(const NetlistTemplate& t, const ParamRanges& r);

// Substitutes every placeholder with a unit-suffixed SPICE literal. Throws
// ValidationError naming a missing or unknown key, or a value outside its range.
std::string instantiate(const NetlistTemplate& t, const DesignPoint& p, const ParamRanges& r);

DesignPoint apply_matching(const DesignPoint& p, const MatchingGroups& g);

// Clips into [min, max] and snaps integer parameters. Keys without a range are kept.
ClampResult clamp(const DesignPoint& p, const ParamRanges& r);

// clamp followed by apply_matching; the form every evaluated point goes through.
DesignPoint normalize(const DesignPoint& p, const ParamRanges& r, const MatchingGroups& g);

// Parses SPICE numbers with scale suffixes ("10p", "1.2", "4meg", "2.5u").
double parse_spice_number(std::string_view text);
// SPICE scale suffix for a unit name ("um" -> "u", "pF" -> "p", "V" -> "").
std::string spice_suffix(std::string_view unit);
// Multiplier from a range unit to SI ("um" -> 1e-6).
double unit_scale(std::string_view unit);

}  // namespace vlmcad
