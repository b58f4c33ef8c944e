#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "vlmcad/agents.hpp"
#include "vlmcad/error.hpp"

// Deterministic stand-ins for every agent role. Each answer is produced as
// JSON text so it travels the same parse and validation path as a model reply.

namespace vlmcad {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

bool is_pmos(const NetlistTemplate& t, const Device& d) {
  if (auto type = t.model_type(d.model)) return *type == "pmos";
  std::string m = d.model;
  std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return !m.empty() && m[0] == 'p';
}

std::vector<const Device*> mosfets(const NetlistTemplate& t) {
  std::vector<const Device*> out;
  for (const auto& d : t.devices) {
    if (d.kind == 'M' && d.nodes.size() >= 3) out.push_back(&d);
  }
  return out;
}

// "{w1}" -> "w1"; anything else -> "".
std::string placeholder_of(const Device& d, const std::string& key) {
  auto v = d.param(key);
  if (!v || v->size() < 3 || v->front() != '{' || v->back() != '}') return "";
  return v->substr(1, v->size() - 2);
}

std::string canonical(const std::string& name, const AgentContext& ctx) {
  if (ctx.groups) {
    if (const auto* g = ctx.groups->group_of(name)) return g->members.front();
  }
  return name;
}

double initial_value(const ParamRange& r) {
  double v = r.min > 0.0 ? std::sqrt(r.min * r.max) : 0.5 * (r.min + r.max);
  return r.integer ? std::round(v) : v;
}

const ParamRange& range_of(const AgentContext& ctx, const std::string& k) {
  const auto* r = ctx.ranges ? ctx.ranges->find(k) : nullptr;
  if (!r) throw ValidationError("scripted agent: no range for '" + k + "'");
  return *r;
}

// Scales a value by factor^sign; integer parameters move by at least one step.
double step_value(double v, int sign, double factor, const ParamRange& r) {
  double next = v * std::pow(factor, sign);
  if (r.integer) {
    next = std::round(next);
    if (sign > 0 && next <= v) next = v + 1;
    if (sign < 0 && next >= v) next = v - 1;
  }
  return std::clamp(next, r.min, r.max);
}

json params_json(const DesignPoint& p, const std::vector<std::string>& keys) {
  json o = json::object();
  for (const auto& k : keys) o[k] = p.count(k) ? p.at(k) : 0.0;
  return o;
}

std::string explain(const AgentContext& ctx) {
  if (!ctx.netlist) return "Circuit summary: " + ctx.graph_summary;
  const auto& t = *ctx.netlist;
  int nmos = 0, pmos = 0, caps = 0, sources = 0;
  for (const auto* d : mosfets(t)) (is_pmos(t, *d) ? pmos : nmos)++;
  for (const auto& d : t.devices) {
    if (d.kind == 'C') ++caps;
    if (d.kind == 'V' || d.kind == 'I') ++sources;
  }
  std::ostringstream os;
  os << "The circuit has " << nmos << " NMOS and " << pmos << " PMOS transistors, " << caps << " capacitors and "
     << sources << " sources. ";
  std::vector<std::string> out_drivers;
  for (const auto* d : mosfets(t)) {
    if (d->nodes[0] == ctx.output_node) out_drivers.push_back(d->name);
  }
  if (!out_drivers.empty()) {
    os << "The output node " << ctx.output_node << " is driven by";
    for (const auto& n : out_drivers) os << " " << n;
    os << ". ";
  }
  for (const auto& d : t.devices) {
    if (d.kind == 'C' && d.nodes.size() == 2 && d.nodes[0] != "0" && d.nodes[1] != "0") {
      os << d.name << " between " << d.nodes[0] << " and " << d.nodes[1] << " compensates the amplifier. ";
    }
  }
  os << "Free parameters: " << ctx.mandatory.size() << ".";
  return os.str();
}

MatchingGroups find_matching(const AgentContext& ctx) {
  MatchingGroups out;
  if (!ctx.netlist) return out;
  const auto& t = *ctx.netlist;
  std::set<std::string> free(ctx.mandatory.begin(), ctx.mandatory.end());
  std::set<std::string> used;
  auto add_pair = [&](const Device& a, const Device& b, const std::string& why) {
    for (const char* key : {"w", "l", "m"}) {
      auto pa = placeholder_of(a, key), pb = placeholder_of(b, key);
      if (pa.empty() || pb.empty() || pa == pb || !free.count(pa) || !free.count(pb)) continue;
      if (used.count(pa) || used.count(pb)) continue;
      used.insert(pa);
      used.insert(pb);
      out.groups.push_back({{pa, pb}, a.name + "/" + b.name + " " + why});
    }
  };
  auto ms = mosfets(t);
  // Differential pairs: exactly two same-polarity devices on a source node, different gates.
  std::map<std::pair<bool, std::string>, std::vector<const Device*>> by_source;
  std::map<std::tuple<bool, std::string, std::string>, std::vector<const Device*>> by_gate_source;
  for (const auto* d : ms) {
    by_source[{is_pmos(t, *d), d->nodes[2]}].push_back(d);
    by_gate_source[{is_pmos(t, *d), d->nodes[1], d->nodes[2]}].push_back(d);
  }
  for (const auto& [key, devs] : by_source) {
    if (devs.size() == 2 && devs[0]->nodes[1] != devs[1]->nodes[1]) {
      add_pair(*devs[0], *devs[1], "form a differential pair on " + key.second);
    }
  }
  // Two-device mirrors (shared gate and source). Larger mirrors set current ratios and stay free.
  for (const auto& [key, devs] : by_gate_source) {
    if (devs.size() == 2) add_pair(*devs[0], *devs[1], "form a current-mirror load");
  }
  return out;
}

DcGoals set_goals(const AgentContext& ctx) {
  DcGoals g;
  g.output_node = ctx.output_node;
  g.output_level = ctx.vdd / 2.0;
  if (!ctx.netlist) return g;
  for (const auto* d : mosfets(*ctx.netlist)) g.devices.push_back({d->name, 0.12, 0.17, 0.1, "saturation"});
  return g;
}

json dc_sizer(const AgentContext& ctx) {
  DesignPoint p = *ctx.current;
  std::set<std::string> nudged;
  std::vector<std::string> notes;
  auto widen = [&](const Device* d, const std::string& why) {
    if (!d) return;
    auto w = placeholder_of(*d, "w");
    if (w.empty()) return;
    w = canonical(w, ctx);
    if (!p.count(w) || nudged.count(w)) return;
    nudged.insert(w);
    p[w] = std::min(p[w] * 1.2, range_of(ctx, w).max);
    notes.push_back("widen " + d->name + " (" + why + ")");
  };
  const auto& t = *ctx.netlist;
  std::set<std::string> starved;
  for (const auto& it : ctx.discrepancies->items) {
    if ((it.kind == DiscrepancyKind::HeadroomViolation && it.quantity == "vds") ||
        (it.kind == DiscrepancyKind::RegionError && it.observed_region == "triode")) {
      starved.insert(it.device);
    }
  }
  for (const auto& it : ctx.discrepancies->items) {
    if (it.kind == DiscrepancyKind::OutputLevelError) {
      bool raise = it.delta < 0.0;
      for (const auto* d : mosfets(t)) {
        if (d->nodes[0] != it.device) continue;
        if (is_pmos(t, *d) == raise) widen(d, raise ? "output too low" : "output too high");
      }
    } else if (starved.count(it.device)) {
      // Too little drain-source voltage: the devices stacked on this drain
      // need less gate overdrive, so widen them instead.
      const auto* d = t.find_device(it.device);
      if (!d || d->kind != 'M') continue;
      bool any = false;
      for (const auto* up : mosfets(t)) {
        if (up != d && up->nodes[2] == d->nodes[0]) {
          widen(up, "headroom for " + d->name);
          any = true;
        }
      }
      if (!any) widen(d, it.quantity);
    } else if (it.device != "circuit") {
      widen(t.find_device(it.device), it.quantity);
    }
  }
  return {{"params", params_json(p, ctx.mandatory)},
          {"rationale", notes.empty() ? std::string("no change") : notes.front() + (notes.size() > 1 ? " and others" : "")}};
}

// Largest weighted violation; power counts once it overshoots its budget by more.
std::string focus_metric(const CostBreakdown& b) {
  if (b.total <= 1.0) return "power";
  std::string best = "power";
  double worst = b.power_term - 1.0;
  for (const auto& [k, v] : b.violations) {
    if (v > worst) {
      worst = v;
      best = k;
    }
  }
  return best;
}

// Coordinate descent around the incumbent. The number of evaluations since the
// incumbent was found selects the knob and the step size; when every knob has
// been tried at every step the previous point is echoed.
json inferencing_sizer(const AgentContext& ctx) {
  constexpr int kRounds = 3;
  constexpr double kFactor = 1.25;
  auto inc = best_index(ctx.history);
  if (!inc) return {{"params", params_json(*ctx.current, ctx.mandatory)}, {"rationale", "no history yet"}};
  const auto& best = ctx.history[*inc];
  const std::size_t attempts = ctx.history.size() - 1 - *inc;
  const std::string focus = focus_metric(best.breakdown);

  std::set<std::string> tied = ctx.groups ? ctx.groups->tied_members() : std::set<std::string>{};
  std::set<std::string> free(ctx.mandatory.begin(), ctx.mandatory.end());
  std::vector<std::pair<std::string, int>> knobs;
  auto table = ctx.knobs.find(focus);
  if (table != ctx.knobs.end()) {
    for (const auto& [k, s] : table->second) {
      std::string c = canonical(k, ctx);
      if (free.count(c) && !tied.count(c) && !range_of(ctx, c).fixed()) knobs.push_back({c, s > 0 ? 1 : -1});
    }
  } else {
    for (const auto& k : ctx.mandatory) {
      if (tied.count(k)) continue;
      knobs.push_back({k, 1});
      knobs.push_back({k, -1});
    }
  }
  if (knobs.empty() || attempts >= kRounds * knobs.size()) {
    return {{"params", params_json(*ctx.current, ctx.mandatory)}, {"rationale", "no further improvement found"}};
  }
  const auto& [name, sign] = knobs[attempts % knobs.size()];
  const int round = static_cast<int>(attempts / knobs.size()) + 1;
  DesignPoint p = best.point;
  p[name] = step_value(p[name], sign, std::pow(kFactor, round), range_of(ctx, name));
  std::string why = (sign > 0 ? "increase " : "decrease ") + name + " to improve " + focus;
  return {{"params", params_json(p, ctx.mandatory)}, {"rationale", why}};
}

json equipped_sizer(const AgentContext& ctx) {
  json ex = json::object();
  const auto& s = *ctx.sensitivity;
  for (const auto& k : ctx.mandatory) {
    std::string c = canonical(k, ctx);
    if (c != k) {
      ex[k] = k + " is matched to " + c + " and follows its value.";
      continue;
    }
    auto it = std::find(s.names.begin(), s.names.end(), k);
    double sg = 0.0, se = 0.0;
    if (it != s.names.end()) {
      auto d = static_cast<Eigen::Index>(it - s.names.begin());
      sg = s.global.importance(d);
      se = s.elite.importance(d);
    }
    auto cls = ctx.classes.count(k) ? ctx.classes.at(k) : ParamClass::Secondary;
    std::string v = ctx.current->count(k) ? fmt(ctx.current->at(k)) : std::string("?");
    switch (cls) {
      case ParamClass::StabilityCritical:
        ex[k] = k + " shapes the cost over the whole search space (global S = " + fmt(sg) +
                "). Keep it near " + v + "; moving it pushes the amplifier out of its working region.";
        break;
      case ParamClass::PerformanceTuning:
        ex[k] = k + " matters mostly among the best designs (elite S = " + fmt(se) + "). The value " + v +
                " trades the remaining spec margins against power.";
        break;
      case ParamClass::Both:
        ex[k] = k + " ranks high globally (S = " + fmt(sg) + ") and among the best designs (S = " + fmt(se) +
                "). It sets the operating region and also fine-tunes the final specs; treat " + v + " as tight.";
        break;
      case ParamClass::Secondary:
        ex[k] = k + " has low importance at both granularities (S = " + fmt(sg) + ", " + fmt(se) + "); " + v +
                " is not critical.";
        break;
    }
  }
  return {{"explanations", ex}};
}

}  // namespace

std::string scripted_agent(AgentRole role, const AgentContext& ctx) {
  (void)build_prompt(role, ctx);  // same context checks as a model call
  json out;
  switch (role) {
    case AgentRole::CircuitExplainer:
      out = {{"explanation", explain(ctx)}};
      break;
    case AgentRole::MatchingFinder:
      out = to_json(find_matching(ctx));
      break;
    case AgentRole::DcGoalSetter: {
      auto g = set_goals(ctx);
      out = {{"devices", to_json(g)["devices"]}, {"output_level", g.output_level}};
      break;
    }
    case AgentRole::InitialDesigner: {
      json p = json::object();
      for (const auto& k : ctx.mandatory) p[k] = initial_value(range_of(ctx, k));
      out = {{"params", p}, {"rationale", "geometric midpoint of every range"}};
      break;
    }
    case AgentRole::DcReviewer: {
      std::size_t n = ctx.discrepancies ? ctx.discrepancies->count() : 0;
      std::string a = n == 0 ? "All DC goals are met." : std::to_string(n) + " DC goals are missed; fix " +
                                                              ctx.discrepancies->items.front().device + " first.";
      out = {{"assessment", a}, {"count", n}};
      break;
    }
    case AgentRole::DcSizer:
      out = dc_sizer(ctx);
      break;
    case AgentRole::SpecsReviewer: {
      auto f = focus_metric(*ctx.cost);
      out = {{"assessment", f == "power" ? std::string("All specifications are met; reduce power.")
                                         : "The largest weighted violation is " + f + "."},
             {"focus", f}};
      break;
    }
    case AgentRole::InferencingSizer:
      out = inferencing_sizer(ctx);
      break;
    case AgentRole::AdvisorReviewer: {
      auto seeds = select_seeds(ctx.history, ctx.seed_count);
      json idx = json::array();
      for (const auto& s : seeds) {
        for (std::size_t i = 0; i < ctx.history.size(); ++i) {
          if (ctx.history[i].point == s.point) {
            idx.push_back(i);
            break;
          }
        }
      }
      out = {{"seed_indices", idx}, {"span_ratio", 0.4}};
      break;
    }
    case AgentRole::EquippedSizer:
      out = equipped_sizer(ctx);
      break;
  }
  return out.dump();
}

ChatReply ScriptedTransport::complete(AgentRole role, const std::vector<ChatMessage>& messages,
                                      const AgentContext& ctx) {
  ++calls_;
  ChatReply r;
  r.content = scripted_agent(role, ctx);
  std::size_t chars = 0;
  for (const auto& m : messages) chars += m.content.size();
  // Rough token estimate for accounting; no tokenizer is involved offline.
  r.prompt_tokens = static_cast<int>(chars / 4);
  r.completion_tokens = static_cast<int>(r.content.size() / 4);
  return r;
}

}  // namespace vlmcad
