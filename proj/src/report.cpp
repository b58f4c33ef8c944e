#include "vlmcad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vlmcad/error.hpp"

namespace vlmcad {

using nlohmann::json;

json to_json(const PhaseOutcome& p) {
  json j = {{"phase", p.phase}, {"iterations", p.iterations}, {"budget", p.budget}, {"wall_s", p.wall_s},
            {"note", p.note}};
  j["best_j"] = p.best_j ? json(*p.best_j) : json(nullptr);
  return j;
}

PhaseOutcome phase_from_json(const json& j) {
  try {
    PhaseOutcome p;
    p.phase = j.at("phase").get<std::string>();
    p.iterations = j.at("iterations").get<int>();
    p.budget = j.at("budget").get<int>();
    p.wall_s = j.at("wall_s").get<double>();
    p.note = j.value("note", std::string());
    if (!j.at("best_j").is_null()) p.best_j = j.at("best_j").get<double>();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed phase record: ") + e.what());
  }
}

std::map<std::string, ParamClass> classify(const SensitivityReport& s, const MatchingGroups& g,
                                           const std::vector<std::string>& params) {
  const std::size_t d = s.names.size();
  const std::size_t top = std::max<std::size_t>(1, (d + 3) / 4);
  std::map<std::string, ParamClass> by_name;
  for (std::size_t i = 0; i < d; ++i) {
    // Ties at the uniform share carry no information, so a parameter must
    // also beat 1/d to count as important.
    auto in_top = [&](const Importance& imp) {
      auto pos = std::find(imp.ranking.begin(), imp.ranking.end(), i) - imp.ranking.begin();
      return static_cast<std::size_t>(pos) < top && imp.importance(static_cast<Eigen::Index>(i)) > 1.0 / d;
    };
    bool stab = in_top(s.global), perf = in_top(s.elite);
    by_name[s.names[i]] = stab && perf ? ParamClass::Both
                          : stab       ? ParamClass::StabilityCritical
                          : perf       ? ParamClass::PerformanceTuning
                                       : ParamClass::Secondary;
  }
  std::map<std::string, ParamClass> out;
  for (const auto& p : params) {
    const auto* grp = g.group_of(p);
    std::string c = grp ? grp->members.front() : p;
    auto it = by_name.find(c);
    out[p] = it == by_name.end() ? ParamClass::Secondary : it->second;
  }
  return out;
}

namespace {

std::string num(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string metric_unit(const std::string& m) {
  if (m == "gain" || m == "thd") return "dB";
  if (m == "ugbw") return "MHz";
  if (m == "pm") return "deg";
  if (m == "offset") return "mV";
  return "";
}

void sensitivity_table(std::ostringstream& os, const FinalReport& r, const Importance& imp) {
  const auto& names = r.sensitivity.names;
  os << "| Rank | Parameter | S | Lengthscale |\n|---:|---|---:|---:|\n";
  for (std::size_t k = 0; k < imp.ranking.size(); ++k) {
    auto i = imp.ranking[k];
    auto d = static_cast<Eigen::Index>(i);
    os << "| " << k + 1 << " | " << names[i] << " | " << num(imp.importance(d), "%.4f") << " | "
       << num(imp.lengthscales(d)) << " |\n";
  }
  // Matched parameters are not searched independently; they share their canonical's row.
  for (const auto& p : r.params) {
    if (std::find(names.begin(), names.end(), p) != names.end()) continue;
    const auto* g = r.groups.group_of(p);
    std::string c = g ? g->members.front() : p;
    auto it = std::find(names.begin(), names.end(), c);
    if (it == names.end()) {
      os << "| - | " << p << " | - | - (not searched) |\n";
      continue;
    }
    auto d = static_cast<Eigen::Index>(it - names.begin());
    os << "| - | " << p << " | " << num(imp.importance(d), "%.4f") << " (tied to " << c << ") | "
       << num(imp.lengthscales(d)) << " |\n";
  }
  os << "\n";
}

}  // namespace

std::string render_report(const FinalReport& r) {
  std::ostringstream os;
  os << "# Sizing report: " << r.circuit << "\n\n";
  os << "Final universal cost J = " << num(r.best_j, "%.4f") << " (" << to_string(r.breakdown.mode) << " mode, "
     << (r.best_j <= 1.0 ? "all specifications met" : "specifications not met") << ").\n\n";

  os << "## Parameters\n\n| Parameter | Value | Unit | Range | Class |\n|---|---:|---|---|---|\n";
  for (const auto& p : r.params) {
    const auto* rg = r.ranges.find(p);
    auto it = r.best.find(p);
    const auto* g = r.groups.group_of(p);
    std::string cls = r.classes.count(p) ? to_string(r.classes.at(p)) : "secondary";
    if (g && g->members.front() != p) cls += " (tied to " + g->members.front() + ")";
    os << "| " << p << " | " << (it == r.best.end() ? std::string("-") : num(it->second)) << " | "
       << (rg ? rg->unit : "") << " | "
       << (rg ? "[" + num(rg->min) + ", " + num(rg->max) + "]" : std::string("-")) << " | " << cls << " |\n";
  }
  os << "\n";

  os << "## Specification compliance\n\n| Metric | Target | Measured | Weighted violation | Status |\n"
     << "|---|---|---:|---:|---|\n";
  for (const auto& s : r.specs.items) {
    std::optional<double> v;
    if (r.measured) v = r.measured->get(s.name);
    double viol = r.breakdown.violations.count(s.name) ? r.breakdown.violations.at(s.name) : 0.0;
    os << "| " << s.name << " | " << (s.direction == Direction::LowerBound ? ">= " : "<= ") << num(s.target) << " "
       << metric_unit(s.name) << " | " << (v ? num(*v) : std::string("n/a")) << " | " << num(viol, "%.4f") << " | "
       << (!v ? "missing" : viol > 0.0 ? "violated" : "met") << " |\n";
  }
  const std::string pw = r.measured && r.measured->power ? num(*r.measured->power) : "n/a";
  os << "| power | <= " << num(r.specs.p_max) << " " << r.specs.power_unit << " | " << pw << " | - | " << num(r.breakdown.power_term, "%.4f") << " of budget |\n";
  if (r.breakdown.sanity_term > 0.0) os << "\nSanity penalty applied: " << num(r.breakdown.sanity_term) << ".\n";
  os << "\n";

  os << "## Global sensitivity (" << r.sensitivity.global.n_points << " designs)\n\n";
  sensitivity_table(os, r, r.sensitivity.global);
  os << "## Elite sensitivity (best " << r.sensitivity.elite.n_points << " designs, fraction "
     << num(r.sensitivity.elite_fraction) << ")\n\n";
  sensitivity_table(os, r, r.sensitivity.elite);

  os << "## Explanations\n\n";
  for (const auto& p : r.params) {
    std::string cls = r.classes.count(p) ? to_string(r.classes.at(p)) : "secondary";
    auto it = r.explanations.find(p);
    os << "- **" << p << "** (" << cls << "): " << (it == r.explanations.end() ? std::string("no explanation recorded.")
                                                                              : it->second)
       << "\n";
  }
  os << "\n";

  os << "## Phase accounting\n\n| Phase | Iterations | Budget | Best J | Wall time (s) | Note |\n"
     << "|---|---:|---:|---:|---:|---|\n";
  for (const auto& ph : r.phases) {
    os << "| " << ph.phase << " | " << ph.iterations << " | " << ph.budget << " | "
       << (ph.best_j ? num(*ph.best_j, "%.4f") : std::string("-")) << " | " << num(ph.wall_s, "%.2f") << " | "
       << ph.note << " |\n";
  }
  return os.str();
}

}  // namespace vlmcad
