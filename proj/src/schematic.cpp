#include "vlmcad/schematic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vlmcad/error.hpp"

namespace vlmcad {
namespace {

using nlohmann::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string mos_kind(const NetlistTemplate& t, const Device& d) {
  auto type = t.model_type(d.model).value_or(lower(d.model));
  if (type.starts_with("n")) return "nmos";
  if (type.starts_with("p")) return "pmos";
  return "mosfet";
}

std::pair<std::string, std::vector<std::string>> classify(const NetlistTemplate& t, const Device& d) {
  std::vector<std::string> terms;
  switch (d.kind) {
    case 'M':
      terms = {"d", "g", "s", "b"};
      for (std::size_t i = 4; i < d.nodes.size(); ++i) terms.push_back("t" + std::to_string(i));
      return {mos_kind(t, d), terms};
    case 'R': return {"resistor", {"p", "n"}};
    case 'C': return {"capacitor", {"p", "n"}};
    case 'L': return {"inductor", {"p", "n"}};
    case 'V': return {"vsource", {"p", "n"}};
    case 'I': return {"isource", {"p", "n"}};
    case 'D': return {"diode", {"a", "k"}};
    case 'E': return {"vcvs", {"p", "n", "cp", "cn"}};
    case 'G': return {"vccs", {"p", "n", "cp", "cn"}};
    case 'X':
      for (std::size_t i = 0; i < d.nodes.size(); ++i) terms.push_back("p" + std::to_string(i + 1));
      return {"subckt", terms};
    default:
      throw ValidationError("device '" + d.name + "' has no graph representation");
  }
}

// Colour refinement over the component/net incidence graph. Returns the
// colour histogram after refinement stabilizes; equal histograms are the
// isomorphism criterion.
struct Incidence {
  std::vector<std::string> label;
  std::vector<std::vector<std::pair<std::string, int>>> adj;  // (terminal, neighbour)
};

Incidence incidence(const CircuitGraph& g) {
  Incidence inc;
  std::map<std::string, int> comp_index;
  for (const auto& c : g.components) {
    comp_index[c.id] = static_cast<int>(inc.label.size());
    inc.label.push_back("C:" + c.kind);
  }
  inc.adj.resize(inc.label.size());
  for (const auto& n : g.nets) {
    int ni = static_cast<int>(inc.label.size());
    inc.label.push_back("N");
    inc.adj.emplace_back();
    for (const auto& m : n.members) {
      int ci = comp_index.at(m.component);
      inc.adj[static_cast<std::size_t>(ni)].emplace_back(m.terminal, ci);
      inc.adj[static_cast<std::size_t>(ci)].emplace_back(m.terminal, ni);
    }
  }
  return inc;
}

bool refinement_equivalent(const CircuitGraph& a, const CircuitGraph& b) {
  auto ia = incidence(a), ib = incidence(b);
  if (ia.label.size() != ib.label.size()) return false;
  // Refine both graphs with one shared colour dictionary.
  std::map<std::string, int> dict;
  auto initial = [&](const Incidence& inc) {
    std::vector<int> c;
    for (const auto& l : inc.label) c.push_back(dict.emplace(l, static_cast<int>(dict.size())).first->second);
    return c;
  };
  auto ca = initial(ia), cb = initial(ib);
  auto histogram = [](const std::vector<int>& c) {
    std::map<int, int> h;
    for (int x : c) ++h[x];
    return h;
  };
  for (std::size_t round = 0; round <= ia.label.size(); ++round) {
    if (histogram(ca) != histogram(cb)) return false;
    std::map<std::string, int> next_dict;
    auto step = [&](const Incidence& inc, const std::vector<int>& c) {
      std::vector<int> out(c.size());
      for (std::size_t v = 0; v < c.size(); ++v) {
        std::vector<std::string> sig;
        for (const auto& [term, u] : inc.adj[v]) sig.push_back(term + "/" + std::to_string(c[static_cast<std::size_t>(u)]));
        std::sort(sig.begin(), sig.end());
        std::string key = std::to_string(c[v]);
        for (const auto& s : sig) key += "|" + s;
        out[v] = next_dict.emplace(key, static_cast<int>(next_dict.size())).first->second;
      }
      return out;
    };
    auto na = step(ia, ca), nb = step(ib, cb);
    bool stable = std::set<int>(na.begin(), na.end()).size() == std::set<int>(ca.begin(), ca.end()).size();
    ca = std::move(na);
    cb = std::move(nb);
    if (stable) break;
  }
  return histogram(ca) == histogram(cb);
}

std::string member_list(std::vector<NetMember> ms) {
  std::sort(ms.begin(), ms.end());
  std::string s;
  for (const auto& m : ms) s += (s.empty() ? "" : ",") + m.component + "." + m.terminal;
  return s;
}

}  // namespace

const std::vector<std::string>& known_component_kinds() {
  static const std::vector<std::string> kinds{"nmos", "pmos", "mosfet", "resistor", "capacitor",
                                              "inductor", "vsource", "isource", "diode", "vcvs",
                                              "vccs", "subckt"};
  return kinds;
}

void CircuitGraph::validate() const {
  const auto& kinds = known_component_kinds();
  std::map<std::string, std::set<std::string>> terminals;
  for (const auto& c : components) {
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
      throw ValidationError("component '" + c.id + "' has unknown kind '" + c.kind + "'");
    }
    auto [it, inserted] = terminals.emplace(c.id, std::set<std::string>{});
    if (!inserted) throw ValidationError("duplicate component id '" + c.id + "'");
    for (const auto& term : c.terminals) {
      if (!it->second.insert(term).second) {
        throw ValidationError("component '" + c.id + "' repeats terminal '" + term + "'");
      }
    }
  }
  std::set<std::string> net_ids;
  std::map<NetMember, std::string> owner;
  for (const auto& n : nets) {
    if (!net_ids.insert(n.id).second) throw ValidationError("duplicate net id '" + n.id + "'");
    for (const auto& m : n.members) {
      auto c = terminals.find(m.component);
      if (c == terminals.end() || !c->second.count(m.terminal)) {
        throw ValidationError("net '" + n.id + "' references unknown terminal " + m.component + "." + m.terminal);
      }
      auto [it, inserted] = owner.emplace(m, n.id);
      if (!inserted) {
        throw ValidationError("terminal " + m.component + "." + m.terminal + " is in nets '" +
                              it->second + "' and '" + n.id + "'");
      }
    }
    if (n.members.size() < 2 && !n.port) {
      throw ValidationError("net '" + n.id + "' has fewer than two members and is not a port");
    }
  }
  for (const auto& [comp, terms] : terminals) {
    for (const auto& term : terms) {
      if (!owner.count({comp, term})) {
        throw ValidationError("dangling terminal " + comp + "." + term);
      }
    }
  }
}

CircuitGraph load_graph(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("schematic JSON: ") + e.what());
  }
  CircuitGraph g;
  try {
    if (doc.contains("schema_version") && doc.at("schema_version").get<int>() != CircuitGraph::kSchemaVersion) {
      throw ValidationError("unsupported schematic schema_version " + doc.at("schema_version").dump());
    }
    for (const auto& c : doc.at("components")) {
      g.components.push_back({c.at("id").get<std::string>(), c.at("kind").get<std::string>(),
                              c.at("terminals").get<std::vector<std::string>>()});
    }
    for (const auto& n : doc.at("nets")) {
      GraphNet net;
      net.id = n.at("id").get<std::string>();
      net.port = n.value("port", false);
      for (const auto& m : n.at("members")) {
        net.members.push_back({m.at("component").get<std::string>(), m.at("terminal").get<std::string>()});
      }
      g.nets.push_back(std::move(net));
    }
    if (doc.contains("annotations")) {
      g.annotations = doc.at("annotations").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("schematic JSON: ") + e.what());
  }
  g.validate();
  return g;
}

CircuitGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read schematic description '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_graph(ss.str());
}

std::string dump_graph(const CircuitGraph& g) {
  json doc;
  doc["schema_version"] = CircuitGraph::kSchemaVersion;
  doc["components"] = json::array();
  for (const auto& c : g.components) {
    doc["components"].push_back({{"id", c.id}, {"kind", c.kind}, {"terminals", c.terminals}});
  }
  doc["nets"] = json::array();
  for (const auto& n : g.nets) {
    json members = json::array();
    for (const auto& m : n.members) members.push_back({{"component", m.component}, {"terminal", m.terminal}});
    doc["nets"].push_back({{"id", n.id}, {"port", n.port}, {"members", members}});
  }
  if (!g.annotations.empty()) doc["annotations"] = g.annotations;
  return doc.dump(2) + "\n";
}

CircuitGraph netlist_to_graph(const NetlistTemplate& t) {
  CircuitGraph g;
  std::map<std::string, std::vector<NetMember>> nets;
  for (const auto& d : t.devices) {
    auto [kind, terms] = classify(t, d);
    for (std::size_t i = 0; i < d.nodes.size(); ++i) nets[d.nodes[i]].push_back({d.name, terms[i]});
    g.components.push_back({d.name, kind, terms});
  }
  for (auto& [id, members] : nets) {
    GraphNet n;
    n.id = id;
    n.port = members.size() < 2;
    n.members = std::move(members);
    g.nets.push_back(std::move(n));
  }
  return g;
}

ConsistencyReport consistency_check(const CircuitGraph& g, const NetlistTemplate& t) {
  ConsistencyReport r;
  try {
    g.validate();
  } catch (const ValidationError& e) {
    r.issues.push_back(std::string("schematic graph invalid: ") + e.what());
    return r;
  }
  auto ref = netlist_to_graph(t);
  r.graph_components = g.components.size();
  r.netlist_components = ref.components.size();
  r.graph_nets = g.nets.size();
  r.netlist_nets = ref.nets.size();
  r.component_count_match = r.graph_components == r.netlist_components;
  r.net_count_match = r.graph_nets == r.netlist_nets;
  if (!r.component_count_match) {
    r.issues.push_back("component count " + std::to_string(r.graph_components) + " in schematic vs " +
                       std::to_string(r.netlist_components) + " in netlist");
  }
  if (!r.net_count_match) {
    r.issues.push_back("net count " + std::to_string(r.graph_nets) + " in schematic vs " +
                       std::to_string(r.netlist_nets) + " in netlist");
  }

  std::map<std::string, const GraphNet*> by_id;
  for (const auto& n : ref.nets) by_id[n.id] = &n;
  std::set<std::string> seen;
  for (const auto& n : g.nets) {
    seen.insert(n.id);
    auto it = by_id.find(n.id);
    if (it == by_id.end()) {
      r.issues.push_back("net '" + n.id + "' only in schematic (" + member_list(n.members) + ")");
      continue;
    }
    auto a = member_list(n.members), b = member_list(it->second->members);
    if (a != b) r.issues.push_back("net '" + n.id + "' differs: schematic {" + a + "} vs netlist {" + b + "}");
  }
  for (const auto& n : ref.nets) {
    if (!seen.count(n.id)) r.issues.push_back("net '" + n.id + "' only in netlist (" + member_list(n.members) + ")");
  }

  bool iso = r.component_count_match && r.net_count_match && refinement_equivalent(g, ref);
  r.pass = iso;
  if (iso) {
    r.issues.clear();  // names differ but connectivity matches under relabeling
  } else if (r.issues.empty()) {
    r.issues.push_back("connectivity differs under every kind-preserving relabeling");
  }
  return r;
}

std::string summarize_graph(const CircuitGraph& g) {
  std::map<std::string, int> kinds;
  for (const auto& c : g.components) ++kinds[c.kind];
  std::ostringstream os;
  os << g.components.size() << " components (";
  bool first = true;
  for (const auto& [k, n] : kinds) {
    os << (first ? "" : ", ") << n << " " << k;
    first = false;
  }
  os << "), " << g.nets.size() << " nets.\n";
  for (const auto& n : g.nets) {
    os << "  net " << n.id << (n.port ? " [port]" : "") << ": " << member_list(n.members) << "\n";
  }
  return os.str();
}

}  // namespace vlmcad
