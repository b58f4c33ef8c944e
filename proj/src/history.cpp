#include "vlmcad/history.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vlmcad/error.hpp"

namespace vlmcad {

using ojson = nlohmann::ordered_json;

std::string history_to_jsonl(const History& h) {
  std::string out;
  for (const auto& e : h) {
    ojson rec;
    rec["phase"] = e.phase;
    rec["iteration"] = e.iteration;
    rec["worker"] = e.worker;
    ojson params = ojson::object();
    for (const auto& [k, v] : e.point) params[k] = v;
    rec["params"] = params;
    rec["j"] = e.j;
    ojson viol = ojson::object();
    for (const auto& [k, v] : e.breakdown.violations) viol[k] = v;
    rec["breakdown"] = {{"power", e.breakdown.power_term},
                        {"violations", viol},
                        {"sanity", e.breakdown.sanity_term},
                        {"mode", to_string(e.breakdown.mode)}};
    if (e.measured) {
      ojson metrics = ojson::object();
      for (const auto& [k, v] : e.measured->metrics) {
        if (std::isfinite(v)) metrics[k] = v;  // JSON has no NaN; absent reads back as missing
      }
      ojson m;
      m["metrics"] = metrics;
      m["power"] = e.measured->power ? ojson(*e.measured->power) : ojson(nullptr);
      m["dc_ok"] = e.measured->dc_ok;
      m["converged"] = e.measured->converged;
      rec["measured"] = m;
    }
    out += rec.dump() + "\n";
  }
  return out;
}

History history_from_jsonl(const std::string& text) {
  History h;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = ojson::parse(line);
      HistoryEntry e;
      e.phase = rec.at("phase").get<std::string>();
      e.iteration = rec.at("iteration").get<int>();
      e.worker = rec.at("worker").get<int>();
      for (const auto& [k, v] : rec.at("params").items()) e.point[k] = v.get<double>();
      e.j = rec.at("j").get<double>();
      const auto& b = rec.at("breakdown");
      e.breakdown.power_term = b.at("power").get<double>();
      for (const auto& [k, v] : b.at("violations").items()) e.breakdown.violations[k] = v.get<double>();
      e.breakdown.sanity_term = b.at("sanity").get<double>();
      e.breakdown.total = e.j;
      e.breakdown.mode = b.at("mode").get<std::string>() == "optimization" ? CostMode::Optimization
                                                                           : CostMode::Feasibility;
      if (rec.contains("measured")) {
        const auto& m = rec.at("measured");
        Measurements meas;
        for (const auto& [k, v] : m.at("metrics").items()) meas.metrics[k] = v.get<double>();
        if (!m.at("power").is_null()) meas.power = m.at("power").get<double>();
        meas.dc_ok = m.at("dc_ok").get<bool>();
        meas.converged = m.at("converged").get<bool>();
        e.measured = meas;
      }
      h.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("history line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return h;
}

void write_history(const std::string& path, const History& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write history '" + path + "'");
  out << history_to_jsonl(h);
}

History read_history(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read history '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return history_from_jsonl(ss.str());
}

History select_seeds(const History& h, std::size_t k) {
  std::vector<std::size_t> order(h.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a].j < h[b].j; });
  History out;
  for (auto i : order) {
    if (out.size() >= k) break;
    bool dup = std::any_of(out.begin(), out.end(), [&](const HistoryEntry& e) { return e.point == h[i].point; });
    if (!dup) out.push_back(h[i]);
  }
  return out;
}

std::optional<std::size_t> best_index(const History& h) {
  if (h.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i].j < h[best].j) best = i;
  }
  return best;
}

}  // namespace vlmcad
