#pragma once

#include <map>
#include <tuple>
#include <string>
#include <vector>

#include "vlmcad/netlist.hpp"

namespace vlmcad {

// Connectivity description of a schematic: what the image-to-netlist stage
// emits. JSON layout (schema_version 1):
//   { "schema_version": 1,
//     "components": [ {"id": "M1", "kind": "nmos", "terminals": ["d","g","s","b"]} ],
//     "nets": [ {"id": "out", "port": false,
//                "members": [ {"component": "M1", "terminal": "d"} ]} ],
//     "annotations": { "out": "#d62728" } }
struct GraphComponent {
  std::string id;
  std::string kind;
  std::vector<std::string> terminals;
};

struct NetMember {
  std::string component;
  std::string terminal;
  bool operator<(const NetMember& o) const {
    return std::tie(component, terminal) < std::tie(o.component, o.terminal);
  }
  bool operator==(const NetMember& o) const = default;
};

struct GraphNet {
  std::string id;
  std::vector<NetMember> members;
  bool port = false;  // single-member nets are allowed only on ports
};

struct CircuitGraph {
  static constexpr int kSchemaVersion = 1;
  std::vector<GraphComponent> components;
  std::vector<GraphNet> nets;
  std::map<std::string, std::string> annotations;  // net id -> colour code

  // Throws ValidationError on a dangling terminal, a terminal in two nets,
  // an unknown component kind or an undeclared single-member net.
  void validate() const;
};

const std::vector<std::string>& known_component_kinds();

CircuitGraph load_graph(const std::string& json_text);
CircuitGraph load_graph_file(const std::string& path);
std::string dump_graph(const CircuitGraph& g);

CircuitGraph netlist_to_graph(const NetlistTemplate& t);

struct ConsistencyReport {
  bool pass = false;
  bool component_count_match = false;
  bool net_count_match = false;
  std::size_t graph_components = 0, netlist_components = 0;
  std::size_t graph_nets = 0, netlist_nets = 0;
  std::vector<std::string> issues;  // human-readable, names the nets/components involved
};

// Passes iff netlist_to_graph(t) and g are isomorphic under a relabeling that
// preserves component kinds and terminal names.
ConsistencyReport consistency_check(const CircuitGraph& g, const NetlistTemplate& t);

// One-paragraph structural summary used in agent prompts.
std::string summarize_graph(const CircuitGraph& g);

}  // namespace vlmcad
