#include "vlmcad/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "vlmcad/error.hpp"

namespace vlmcad {

using nlohmann::json;

namespace {

struct RoleName {
  AgentRole role;
  const char* name;
};

constexpr RoleName kRoleNames[] = {
    {AgentRole::CircuitExplainer, "CircuitExplainer"}, {AgentRole::MatchingFinder, "MatchingFinder"},
    {AgentRole::DcGoalSetter, "DcGoalSetter"},         {AgentRole::InitialDesigner, "InitialDesigner"},
    {AgentRole::DcReviewer, "DcReviewer"},             {AgentRole::DcSizer, "DcSizer"},
    {AgentRole::SpecsReviewer, "SpecsReviewer"},       {AgentRole::InferencingSizer, "InferencingSizer"},
    {AgentRole::AdvisorReviewer, "AdvisorReviewer"},   {AgentRole::EquippedSizer, "EquippedSizer"},
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::string to_string(AgentRole r) {
  for (const auto& rn : kRoleNames) {
    if (rn.role == r) return rn.name;
  }
  return "unknown";
}

AgentRole agent_role_from_string(const std::string& s) {
  for (const auto& rn : kRoleNames) {
    if (s == rn.name) return rn.role;
  }
  throw ParseError("unknown agent role '" + s + "'");
}

const std::vector<AgentRole>& all_agent_roles() {
  static const std::vector<AgentRole> roles = [] {
    std::vector<AgentRole> v;
    for (const auto& rn : kRoleNames) v.push_back(rn.role);
    return v;
  }();
  return roles;
}

void DcGoals::validate(double vdd) const {
  if (!(output_level >= 0.0 && output_level <= vdd)) {
    throw ValidationError("output level " + fmt(output_level) + " V lies outside the rails");
  }
  std::set<std::string> seen;
  for (const auto& d : devices) {
    if (!seen.insert(d.device).second) throw ValidationError("duplicate goal for device " + d.device);
    if (!(d.vov >= 0.0 && d.vov <= vdd)) throw ValidationError("goal vov of " + d.device + " outside the rails");
    if (!(d.vds >= 0.0 && d.vds <= vdd)) throw ValidationError("goal vds of " + d.device + " outside the rails");
    if (d.region != "saturation" && d.region != "triode" && d.region != "cutoff") {
      throw ValidationError("goal region of " + d.device + " must be saturation, triode or cutoff");
    }
    if (d.region != "cutoff" && !(d.id_ua > 0.0)) {
      throw ValidationError("goal current of conducting device " + d.device + " must be positive");
    }
  }
}

const DeviceGoal* DcGoals::find(const std::string& device) const {
  for (const auto& d : devices) {
    if (d.device == device) return &d;
  }
  return nullptr;
}

std::string to_string(DiscrepancyKind k) {
  switch (k) {
    case DiscrepancyKind::HeadroomViolation: return "headroom violation";
    case DiscrepancyKind::RegionError: return "region error";
    case DiscrepancyKind::OutputLevelError: return "output-level error";
  }
  return "unknown";
}

DiscrepancyKind discrepancy_kind_from_string(const std::string& s) {
  if (s == "headroom violation") return DiscrepancyKind::HeadroomViolation;
  if (s == "region error") return DiscrepancyKind::RegionError;
  if (s == "output-level error") return DiscrepancyKind::OutputLevelError;
  throw ParseError("unknown discrepancy kind '" + s + "'");
}

std::string to_string(ParamClass c) {
  switch (c) {
    case ParamClass::StabilityCritical: return "stability-critical";
    case ParamClass::PerformanceTuning: return "performance-tuning";
    case ParamClass::Both: return "stability-critical and performance-tuning";
    case ParamClass::Secondary: return "secondary";
  }
  return "unknown";
}

DiscrepancyReport build_discrepancy_report(const DcGoals& goals, const DcResult& dc, double tolerance) {
  DiscrepancyReport rep;
  if (!dc.converged) {
    DiscrepancyItem it;
    it.device = "circuit";
    it.quantity = "convergence";
    it.kind = DiscrepancyKind::RegionError;
    it.expected_region = "converged";
    it.observed_region = "not converged";
    rep.items.push_back(it);
    return rep;
  }
  for (const auto& g : goals.devices) {
    const DeviceOp* op = dc.device(g.device);
    if (!op) {
      DiscrepancyItem it;
      it.device = g.device;
      it.quantity = "region";
      it.kind = DiscrepancyKind::RegionError;
      it.expected_region = g.region;
      it.observed_region = "unknown";
      rep.items.push_back(it);
      continue;
    }
    if (op->region != g.region) {
      DiscrepancyItem it;
      it.device = g.device;
      it.quantity = "region";
      it.kind = DiscrepancyKind::RegionError;
      it.expected_region = g.region;
      it.observed_region = op->region;
      rep.items.push_back(it);
    }
    if (g.region == "cutoff") continue;
    if (op->vds < g.vds * (1.0 - tolerance)) {
      rep.items.push_back({g.device, "vds", g.vds, op->vds, op->vds - g.vds, DiscrepancyKind::HeadroomViolation, "", ""});
    }
    const double id_ua = op->id * 1e6;
    if (id_ua < g.id_ua * (1.0 - tolerance)) {
      rep.items.push_back({g.device, "id", g.id_ua, id_ua, id_ua - g.id_ua, DiscrepancyKind::HeadroomViolation, "", ""});
    }
  }
  auto it = dc.node_voltages.find(goals.output_node);
  double observed = it == dc.node_voltages.end() ? 0.0 : it->second;
  if (it == dc.node_voltages.end() || std::abs(observed - goals.output_level) > tolerance * std::abs(goals.output_level)) {
    rep.items.push_back({goals.output_node, "level", goals.output_level, observed, observed - goals.output_level,
                         DiscrepancyKind::OutputLevelError, "", ""});
  }
  return rep;
}

json to_json(const DcGoals& g) {
  json devs = json::object();
  for (const auto& d : g.devices) {
    devs[d.device] = {{"vov", d.vov}, {"vds", d.vds}, {"id_ua", d.id_ua}, {"region", d.region}};
  }
  return {{"devices", devs}, {"output_node", g.output_node}, {"output_level", g.output_level}};
}

DcGoals goals_from_json(const json& j) {
  try {
    DcGoals g;
    for (const auto& [name, d] : j.at("devices").items()) {
      g.devices.push_back({name, d.at("vov").get<double>(), d.at("vds").get<double>(), d.at("id_ua").get<double>(),
                           d.value("region", std::string("saturation"))});
    }
    g.output_node = j.value("output_node", std::string("out"));
    g.output_level = j.at("output_level").get<double>();
    return g;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed DC goals: ") + e.what());
  }
}

json to_json(const MatchingGroups& g) {
  json arr = json::array();
  for (const auto& grp : g.groups) arr.push_back({{"members", grp.members}, {"rationale", grp.rationale}});
  return {{"groups", arr}};
}

MatchingGroups groups_from_json(const json& j) {
  try {
    MatchingGroups g;
    for (const auto& grp : j.at("groups")) {
      g.groups.push_back({grp.at("members").get<std::vector<std::string>>(), grp.value("rationale", std::string())});
    }
    return g;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed matching groups: ") + e.what());
  }
}

json to_json(const DiscrepancyReport& r) {
  json items = json::array();
  for (const auto& it : r.items) {
    json o = {{"device", it.device}, {"quantity", it.quantity}, {"kind", to_string(it.kind)}};
    if (it.kind == DiscrepancyKind::RegionError) {
      o["expected"] = it.expected_region;
      o["observed"] = it.observed_region;
    } else {
      o["goal"] = it.goal;
      o["observed"] = it.observed;
      o["delta"] = it.delta;
    }
    items.push_back(o);
  }
  return {{"items", items}, {"count", r.count()}};
}

// ---------------------------------------------------------------- transcript

void Transcript::append(TranscriptEntry e) {
  e.call = entries_.size();
  entries_.push_back(std::move(e));
}

namespace {

nlohmann::ordered_json entry_to_json(const TranscriptEntry& e) {
  nlohmann::ordered_json o;
  o["call"] = e.call;
  o["role"] = to_string(e.role);
  o["attempt"] = e.attempt;
  o["timestamp"] = e.timestamp;
  o["prompt"] = e.prompt;
  o["response"] = e.raw_response;
  o["parsed"] = e.parsed;
  o["error"] = e.error;
  o["prompt_tokens"] = e.prompt_tokens;
  o["completion_tokens"] = e.completion_tokens;
  return o;
}

}  // namespace

std::string Transcript::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) out += entry_to_json(e).dump() + "\n";
  return out;
}

Transcript Transcript::from_jsonl(const std::string& text) {
  Transcript t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto o = json::parse(line);
      TranscriptEntry e;
      e.role = agent_role_from_string(o.at("role").get<std::string>());
      e.attempt = o.value("attempt", 0);
      e.timestamp = o.value("timestamp", std::string());
      e.prompt = o.value("prompt", std::string());
      e.raw_response = o.at("response").get<std::string>();
      e.parsed = o.value("parsed", json());
      e.error = o.value("error", std::string());
      e.prompt_tokens = o.value("prompt_tokens", 0);
      e.completion_tokens = o.value("completion_tokens", 0);
      t.append(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError("transcript line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return t;
}

void Transcript::flush(const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write transcript " + path);
  for (; flushed_ < entries_.size(); ++flushed_) out << entry_to_json(entries_[flushed_]).dump() << "\n";
}

// ------------------------------------------------------------------- prompts

namespace {

const char* role_task(AgentRole role) {
  switch (role) {
    case AgentRole::CircuitExplainer:
      return "Explain the topology of the amplifier: its stages, the role of every transistor, the compensation "
             "network and the bias path.";
    case AgentRole::MatchingFinder:
      return "Identify parameters that must stay equal to preserve symmetry (differential pairs, current-mirror "
             "loads). Only group parameters from the mandatory list.";
    case AgentRole::DcGoalSetter:
      return "Set DC operating goals for every transistor: overdrive voltage, minimum drain-source voltage, "
             "minimum drain current and region, plus the target DC level of the output node.";
    case AgentRole::InitialDesigner:
      return "Propose an initial sizing that satisfies the DC goals.";
    case AgentRole::DcReviewer:
      return "Review the simulated operating point against the DC goals. Confirm the number of discrepancies and "
             "say which ones to fix first.";
    case AgentRole::DcSizer:
      return "Resize the circuit to remove the listed DC discrepancies while keeping the other devices in place.";
    case AgentRole::SpecsReviewer:
      return "Compare the measured performance with the specifications and name the metric to focus on next "
             "(use \"power\" when every specification is met).";
    case AgentRole::InferencingSizer:
      return "Use the history of previous iterations to propose the next sizing. Do not repeat a previous "
             "parameter set.";
    case AgentRole::AdvisorReviewer:
      return "Select the best unique designs from the iteration log to seed the numerical optimizer, and choose "
             "the span ratio of the local search box around each seed.";
    case AgentRole::EquippedSizer:
      return "Explain the final parameter values using the global and elite sensitivity results.";
  }
  return "";
}

const char* response_schema(AgentRole role) {
  switch (role) {
    case AgentRole::CircuitExplainer: return R"({"explanation": "<text>"})";
    case AgentRole::MatchingFinder:
      return R"({"groups": [{"members": ["<param>", "<param>"], "rationale": "<text>"}]})";
    case AgentRole::DcGoalSetter:
      return R"({"devices": {"<device>": {"vov": <V>, "vds": <V>, "id_ua": <uA>, "region": "saturation"}}, "output_level": <V>})";
    case AgentRole::InitialDesigner:
    case AgentRole::DcSizer:
    case AgentRole::InferencingSizer:
      return R"({"params": {"<every mandatory key>": <number>}, "rationale": "<text>"})";
    case AgentRole::DcReviewer: return R"({"assessment": "<text>", "count": <number of discrepancies>})";
    case AgentRole::SpecsReviewer: return R"({"assessment": "<text>", "focus": "<metric or power>"})";
    case AgentRole::AdvisorReviewer: return R"({"seed_indices": [<history index>], "span_ratio": <0..1>})";
    case AgentRole::EquippedSizer: return R"({"explanations": {"<every mandatory key>": "<text>"}})";
  }
  return "{}";
}

void require(bool ok, AgentRole role, const char* what) {
  if (!ok) throw ValidationError(to_string(role) + " prompt needs " + what);
}

std::string point_text(const DesignPoint& p) {
  std::vector<std::string> parts;
  for (const auto& [k, v] : p) parts.push_back(k + "=" + fmt(v));
  return join(parts, ", ");
}

void add_param_section(std::ostringstream& os, AgentRole role, const AgentContext& ctx) {
  require(ctx.ranges != nullptr, role, "parameter ranges");
  require(ctx.groups.has_value(), role, "matching groups");
  json keys = ctx.mandatory;
  os << "## Mandatory parameters\nReturn exactly these keys, no more and no fewer:\n" << keys.dump() << "\n\n";
  os << "## Parameter ranges\n";
  for (const auto& k : ctx.mandatory) {
    const auto* r = ctx.ranges->find(k);
    if (!r) throw ValidationError(to_string(role) + " prompt: no range for '" + k + "'");
    os << "- " << k << ": [" << fmt(r->min) << ", " << fmt(r->max) << "] " << r->unit << (r->integer ? " (integer)" : "")
       << "\n";
  }
  os << "\n## Matching groups\n";
  if (ctx.groups->groups.empty()) os << "(none)\n";
  for (const auto& g : ctx.groups->groups) os << "- " << join(g.members, " = ") << "\n";
  os << "\n";
}

}  // namespace

std::string system_prompt(AgentRole role) {
  return "You are the " + to_string(role) +
         " agent of an analog circuit sizing team. Answer with a single JSON object and nothing else.";
}

std::string build_prompt(AgentRole role, const AgentContext& ctx) {
  std::ostringstream os;
  os << "# Task\n" << role_task(role) << "\n\n";
  switch (role) {
    case AgentRole::CircuitExplainer:
    case AgentRole::MatchingFinder:
    case AgentRole::DcGoalSetter:
      require(!ctx.graph_summary.empty(), role, "the circuit graph summary");
      os << "## Circuit\n" << ctx.graph_summary << "\n";
      if (!ctx.explanation.empty()) os << "## Circuit analysis\n" << ctx.explanation << "\n\n";
      if (role == AgentRole::MatchingFinder) {
        json keys = ctx.mandatory;
        os << "## Mandatory parameters\n" << keys.dump() << "\n\n";
      }
      if (role == AgentRole::DcGoalSetter) {
        require(ctx.vdd > 0.0, role, "the supply voltage");
        os << "## Supply\n" << fmt(ctx.vdd) << " V on node " << ctx.supply_node << "; output node "
           << ctx.output_node << "\n\n";
      }
      break;
    case AgentRole::InitialDesigner:
      add_param_section(os, role, ctx);
      if (!ctx.explanation.empty()) os << "## Circuit analysis\n" << ctx.explanation << "\n\n";
      if (ctx.goals) os << "## DC goals\n" << to_json(*ctx.goals).dump() << "\n\n";
      break;
    case AgentRole::DcReviewer:
    case AgentRole::DcSizer: {
      require(ctx.goals.has_value(), role, "DC goals");
      require(ctx.discrepancies.has_value(), role, "a discrepancy report");
      if (role == AgentRole::DcSizer) {
        require(ctx.netlist != nullptr, role, "the netlist");
        add_param_section(os, role, ctx);
        require(ctx.current.has_value(), role, "the current design point");
        os << "## Current parameters\n" << point_text(*ctx.current) << "\n\n";
      } else {
        require(ctx.dc.has_value(), role, "a DC result");
      }
      os << "## DC goals\n" << to_json(*ctx.goals).dump() << "\n\n";
      os << "## Discrepancies (" << ctx.discrepancies->count() << ")\n";
      for (const auto& it : ctx.discrepancies->items) {
        os << "- " << it.device << " " << it.quantity << " [" << to_string(it.kind) << "]: ";
        if (it.kind == DiscrepancyKind::RegionError) {
          os << "expected " << it.expected_region << ", observed " << it.observed_region << "\n";
        } else {
          os << "goal " << fmt(it.goal) << ", observed " << fmt(it.observed) << ", delta " << fmt(it.delta) << "\n";
        }
      }
      os << "\n";
      break;
    }
    case AgentRole::SpecsReviewer:
      require(ctx.specs != nullptr, role, "the specification set");
      require(ctx.measurements.has_value(), role, "measurements");
      require(ctx.cost.has_value(), role, "a cost breakdown");
      os << "## Specifications vs measurements\n";
      for (const auto& s : ctx.specs->items) {
        auto v = ctx.measurements->get(s.name);
        os << "- " << s.name << " " << (s.direction == Direction::LowerBound ? ">= " : "<= ") << fmt(s.target)
           << ": measured " << (v ? fmt(*v) : std::string("n/a")) << ", weighted violation "
           << fmt(ctx.cost->violations.count(s.name) ? ctx.cost->violations.at(s.name) : 0.0) << "\n";
      }
      os << "- power: " << (ctx.measurements->power ? fmt(*ctx.measurements->power) : std::string("n/a")) << " "
         << ctx.specs->power_unit << " of " << fmt(ctx.specs->p_max) << "\n";
      os << "Universal cost " << fmt(ctx.cost->total) << " (" << to_string(ctx.cost->mode) << ")\n\n";
      break;
    case AgentRole::InferencingSizer: {
      add_param_section(os, role, ctx);
      require(ctx.current.has_value(), role, "the current design point");
      os << "## Current parameters\n" << point_text(*ctx.current) << "\n\n";
      if (!ctx.specs_review.empty()) os << "## Specs review\n" << ctx.specs_review << "\n\n";
      std::size_t n = ctx.history.size();
      std::size_t start = n > ctx.history_window ? n - ctx.history_window : 0;
      os << "## History (last " << (n - start) << " of " << n << ")\n";
      for (std::size_t i = start; i < n; ++i) {
        const auto& h = ctx.history[i];
        os << "- iter " << h.iteration << ": J=" << fmt(h.j) << " " << point_text(h.point) << "\n";
      }
      os << "\n";
      break;
    }
    case AgentRole::AdvisorReviewer:
      require(!ctx.history.empty(), role, "a non-empty history");
      os << "## Iteration log\n";
      for (std::size_t i = 0; i < ctx.history.size(); ++i) {
        os << "- [" << i << "] J=" << fmt(ctx.history[i].j) << " " << point_text(ctx.history[i].point) << "\n";
      }
      os << "\nSelect at most " << ctx.seed_count << " seeds.\n\n";
      break;
    case AgentRole::EquippedSizer:
      require(ctx.sensitivity != nullptr, role, "a sensitivity report");
      require(ctx.current.has_value(), role, "the final design point");
      {
        json keys = ctx.mandatory;
        os << "## Parameters to explain\n" << keys.dump() << "\n\n## Final parameters\n" << point_text(*ctx.current)
           << "\n\n## Sensitivity (global S, elite S)\n";
        const auto& s = *ctx.sensitivity;
        for (std::size_t i = 0; i < s.names.size(); ++i) {
          auto d = static_cast<Eigen::Index>(i);
          os << "- " << s.names[i] << ": " << fmt(s.global.importance(d)) << ", " << fmt(s.elite.importance(d)) << "\n";
        }
        os << "\n";
      }
      break;
  }
  os << "## Response format\nReply with one JSON object of this shape:\n" << response_schema(role) << "\n";
  return os.str();
}

// ---------------------------------------------------------------- validation

ValidatedPoint validate_params(const json& params, const std::vector<std::string>& mandatory,
                               const ParamRanges& ranges, const MatchingGroups& groups) {
  if (!params.is_object()) throw ValidationError("\"params\" must be a JSON object");
  std::set<std::string> want(mandatory.begin(), mandatory.end());
  std::vector<std::string> missing, extra, non_numeric;
  DesignPoint p;
  for (const auto& k : mandatory) {
    if (!params.contains(k)) missing.push_back(k);
  }
  for (const auto& [k, v] : params.items()) {
    if (!want.count(k)) {
      extra.push_back(k);
      continue;
    }
    double x = 0.0;
    bool ok = false;
    if (v.is_number()) {
      x = v.get<double>();
      ok = std::isfinite(x);
    } else if (v.is_string()) {
      try {
        x = parse_spice_number(v.get<std::string>());
        ok = std::isfinite(x);
      } catch (const Error&) {
      }
    }
    if (ok) {
      p[k] = x;
    } else {
      non_numeric.push_back(k);
    }
  }
  std::vector<std::string> problems;
  if (!missing.empty()) problems.push_back("missing key(s): " + join(missing, ", "));
  if (!extra.empty()) problems.push_back("extra key(s): " + join(extra, ", "));
  if (!non_numeric.empty()) problems.push_back("non-numeric value(s): " + join(non_numeric, ", "));
  if (!problems.empty()) throw ValidationError(join(problems, "; "));

  ValidatedPoint out;
  auto clamped = clamp(p, ranges);
  for (const auto& k : clamped.clipped) {
    out.corrections.push_back("clamped " + k + " from " + fmt(p.at(k)) + " to " + fmt(clamped.point.at(k)));
  }
  out.point = apply_matching(clamped.point, groups);
  for (const auto& [k, v] : out.point) {
    if (v != clamped.point.at(k)) {
      const auto* g = groups.group_of(k);
      out.corrections.push_back("matched " + k + " to " + (g ? g->members.front() : std::string("?")) + " (" + fmt(v) + ")");
    }
  }
  return out;
}

json parse_response(const std::string& raw) {
  std::string s = raw;
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError("empty response");
  s = s.substr(first);
  if (s.rfind("```", 0) == 0) {
    auto nl = s.find('\n');
    auto close = s.rfind("```");
    if (nl == std::string::npos || close <= nl) throw ParseError("unterminated code fence");
    s = s.substr(nl + 1, close - nl - 1);
  }
  json j;
  try {
    j = json::parse(s);
  } catch (const json::exception& e) {
    throw ParseError(std::string("response is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("response must be a single JSON object");
  return j;
}

namespace {

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  return j.at(key);
}

}  // namespace

CallResult check_response(AgentRole role, const json& parsed, const AgentContext& ctx) {
  CallResult res;
  res.parsed = parsed;
  switch (role) {
    case AgentRole::CircuitExplainer:
      if (!field(parsed, "explanation").is_string()) throw ValidationError("\"explanation\" must be text");
      break;
    case AgentRole::MatchingFinder: {
      auto groups = groups_from_json(parsed);
      std::set<std::string> free(ctx.mandatory.begin(), ctx.mandatory.end());
      for (const auto& g : groups.groups) {
        if (g.members.size() < 2) throw ValidationError("a matching group needs at least two members");
        for (const auto& m : g.members) {
          if (!free.count(m)) throw ValidationError("matching member '" + m + "' is not a mandatory parameter");
        }
      }
      if (ctx.netlist) groups.validate(*ctx.netlist);
      break;
    }
    case AgentRole::DcGoalSetter: {
      auto goals = goals_from_json(parsed);
      goals.validate(ctx.vdd);
      if (ctx.netlist) {
        for (const auto& d : goals.devices) {
          const auto* dev = ctx.netlist->find_device(d.device);
          if (!dev || dev->kind != 'M') throw ValidationError("goal names unknown transistor '" + d.device + "'");
        }
      }
      break;
    }
    case AgentRole::InitialDesigner:
    case AgentRole::DcSizer:
    case AgentRole::InferencingSizer:
      if (!ctx.ranges || !ctx.groups) throw ValidationError("sizing response needs ranges and matching groups");
      res.point = validate_params(field(parsed, "params"), ctx.mandatory, *ctx.ranges, *ctx.groups);
      break;
    case AgentRole::DcReviewer: {
      const auto& c = field(parsed, "count");
      if (!c.is_number_integer()) throw ValidationError("\"count\" must be an integer");
      if (ctx.discrepancies && c.get<long long>() != static_cast<long long>(ctx.discrepancies->count())) {
        throw ValidationError("\"count\" is " + c.dump() + " but the report lists " +
                              std::to_string(ctx.discrepancies->count()) + " discrepancies");
      }
      break;
    }
    case AgentRole::SpecsReviewer: {
      const auto& f = field(parsed, "focus");
      if (!f.is_string()) throw ValidationError("\"focus\" must be text");
      auto name = f.get<std::string>();
      if (name != "power" && !(ctx.specs && ctx.specs->find(name))) {
        throw ValidationError("\"focus\" names unknown metric '" + name + "'");
      }
      break;
    }
    case AgentRole::AdvisorReviewer: {
      const auto& idx = field(parsed, "seed_indices");
      if (!idx.is_array() || idx.empty()) throw ValidationError("\"seed_indices\" must be a non-empty array");
      if (idx.size() > ctx.seed_count) throw ValidationError("too many seeds");
      std::set<long long> seen;
      std::set<DesignPoint> points;
      for (const auto& i : idx) {
        if (!i.is_number_integer()) throw ValidationError("seed indices must be integers");
        auto v = i.get<long long>();
        if (v < 0 || v >= static_cast<long long>(ctx.history.size())) {
          throw ValidationError("seed index " + std::to_string(v) + " is outside the history");
        }
        if (!seen.insert(v).second || !points.insert(ctx.history[static_cast<std::size_t>(v)].point).second) {
          throw ValidationError("seed " + std::to_string(v) + " repeats a design");
        }
      }
      const auto& r = field(parsed, "span_ratio");
      if (!r.is_number() || !(r.get<double>() > 0.0 && r.get<double>() <= 1.0)) {
        throw ValidationError("\"span_ratio\" must lie in (0, 1]");
      }
      break;
    }
    case AgentRole::EquippedSizer: {
      const auto& ex = field(parsed, "explanations");
      if (!ex.is_object()) throw ValidationError("\"explanations\" must be an object");
      std::set<std::string> want(ctx.mandatory.begin(), ctx.mandatory.end()), got;
      for (const auto& [k, v] : ex.items()) {
        if (!v.is_string()) throw ValidationError("explanation of '" + k + "' must be text");
        got.insert(k);
      }
      if (got != want) throw ValidationError("explanations must cover exactly the mandatory parameters");
      break;
    }
  }
  return res;
}

CallResult call(AgentRole role, const AgentContext& ctx, Transport& transport, Transcript& transcript, int retries) {
  const std::string prompt = build_prompt(role, ctx);
  std::vector<ChatMessage> messages{{"system", system_prompt(role)}, {"user", prompt}};
  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    ChatReply reply = transport.complete(role, messages, ctx);
    TranscriptEntry e;
    e.role = role;
    e.attempt = attempt;
    e.prompt = messages.back().content;
    e.raw_response = reply.content;
    e.timestamp = now_iso();
    e.prompt_tokens = reply.prompt_tokens;
    e.completion_tokens = reply.completion_tokens;
    try {
      auto parsed = parse_response(reply.content);
      auto res = check_response(role, parsed, ctx);
      e.parsed = parsed;
      transcript.append(std::move(e));
      return res;
    } catch (const ValidationError& ex) {
      last_error = ex.what();
    } catch (const ParseError& ex) {
      last_error = ex.what();
    }
    e.error = last_error;
    transcript.append(std::move(e));
    messages.push_back({"assistant", reply.content});
    messages.push_back({"user", "Your response was rejected: " + last_error +
                                    "\nReply again with a single JSON object of the requested shape."});
  }
  throw ValidationError(to_string(role) + " response rejected after " + std::to_string(retries + 1) +
                        " attempts: " + last_error);
}

bool detect_deadloop(const DesignPoint& prev, const DesignPoint& next, double rel_tol) {
  if (prev.size() != next.size()) return false;
  for (const auto& [k, a] : prev) {
    auto it = next.find(k);
    if (it == next.end()) return false;
    double b = it->second;
    if (std::abs(a - b) > rel_tol * std::max(std::abs(a), std::abs(b))) return false;
  }
  return true;
}

DesignPoint perturb_widths(const DesignPoint& p, std::mt19937_64& rng, const ParamRanges& ranges,
                           const MatchingGroups& groups, const std::string& width_prefix) {
  std::uniform_real_distribution<double> factor(0.95, 1.05);
  DesignPoint out = p;
  for (auto& [k, v] : out) {
    if (k.rfind(width_prefix, 0) == 0) v *= factor(rng);
  }
  return normalize(out, ranges, groups);
}

}  // namespace vlmcad
