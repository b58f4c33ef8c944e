#include "vlmcad/spec_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vlmcad/error.hpp"

namespace vlmcad {

std::string to_string(Direction d) {
  return d == Direction::LowerBound ? "lower_bound" : "upper_bound";
}

std::string to_string(CostMode m) {
  return m == CostMode::Optimization ? "optimization" : "feasibility";
}

Direction direction_from_string(const std::string& s) {
  if (s == "lower_bound" || s == "LowerBound" || s == ">=") return Direction::LowerBound;
  if (s == "upper_bound" || s == "UpperBound" || s == "<=") return Direction::UpperBound;
  throw ConfigError("unknown spec direction '" + s + "'");
}

void SpecSet::validate() const {
  if (!(p_max > 0.0) || !std::isfinite(p_max)) {
    throw ValidationError("spec set: p_max must be positive");
  }
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.name.empty()) throw ValidationError("spec set: empty metric name");
    if (!(item.weight >= 0.0)) {
      throw ValidationError("spec set: negative weight for '" + item.name + "'");
    }
    if (!std::isfinite(item.target)) {
      throw ValidationError("spec set: non-finite target for '" + item.name + "'");
    }
    if (!seen.insert(item.name).second) {
      throw ValidationError("spec set: duplicate metric '" + item.name + "'");
    }
  }
  power_scale();
}

double SpecSet::power_scale() const {
  if (power_unit == "W") return 1.0;
  if (power_unit == "mW") return 1e-3;
  if (power_unit == "uW") return 1e-6;
  if (power_unit == "nW") return 1e-9;
  throw ConfigError("unknown power unit '" + power_unit + "'");
}

const SpecItem* SpecSet::find(const std::string& name) const {
  auto it = std::find_if(items.begin(), items.end(),
                         [&](const SpecItem& s) { return s.name == name; });
  return it == items.end() ? nullptr : &*it;
}

std::optional<double> Measurements::get(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) return std::nullopt;
  return it->second;
}

double violation(double y, double target, Direction direction) {
  if (!std::isfinite(y)) throw NumericalError("violation: non-finite metric value");
  return direction == Direction::LowerBound ? std::max(0.0, target - y)
                                            : std::max(0.0, y - target);
}

CostMode mode_of(double j) {
  return j <= 1.0 ? CostMode::Optimization : CostMode::Feasibility;
}

CostBreakdown universal_cost(const Measurements& meas, const SpecSet& specs) {
  CostBreakdown out;
  bool broken = !meas.converged || !meas.dc_ok;

  if (meas.power && std::isfinite(*meas.power)) {
    out.power_term = *meas.power / specs.p_max;
  } else {
    broken = true;
  }

  for (const auto& item : specs.items) {
    auto y = meas.get(item.name);
    if (!y || !std::isfinite(*y)) {
      broken = true;
      continue;
    }
    out.violations[item.name] = item.weight * violation(*y, item.target, item.direction);
  }

  if (auto gain = meas.get("gain"); gain && std::isfinite(*gain) && *gain < specs.gain_floor_db) {
    broken = true;
  }

  out.sanity_term = broken ? specs.sanity_penalty : 0.0;
  out.total = out.power_term + out.sanity_term;
  for (const auto& [name, v] : out.violations) out.total += v;
  out.mode = mode_of(out.total);
  return out;
}

const std::map<std::string, double>& default_metric_weights() {
  static const std::map<std::string, double> weights{
      {"gain", 1.0}, {"ugbw", 0.2}, {"pm", 0.1}, {"thd", 0.5}, {"offset", 10.0}};
  return weights;
}

Direction default_direction(const std::string& metric) {
  if (metric == "thd" || metric == "offset") return Direction::UpperBound;
  return Direction::LowerBound;
}

SpecSet make_spec_set(double gain_db, double ugbw_mhz, double pm_deg, double thd_db,
                      double offset_mv, double p_max) {
  const auto& w = default_metric_weights();
  SpecSet s;
  s.items = {
      {"gain", Direction::LowerBound, gain_db, w.at("gain")},
      {"ugbw", Direction::LowerBound, ugbw_mhz, w.at("ugbw")},
      {"pm", Direction::LowerBound, pm_deg, w.at("pm")},
      {"thd", Direction::UpperBound, thd_db, w.at("thd")},
      {"offset", Direction::UpperBound, offset_mv, w.at("offset")},
  };
  s.p_max = p_max;
  return s;
}

}  // namespace vlmcad
