#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vlmcad {

enum class Direction { LowerBound, UpperBound };
enum class CostMode { Feasibility, Optimization };

std::string to_string(Direction d);
std::string to_string(CostMode m);
Direction direction_from_string(const std::string& s);

struct SpecItem {
  std::string name;
  Direction direction = Direction::LowerBound;
  double target = 0.0;
  double weight = 0.0;
};

struct SpecSet {
  std::vector<SpecItem> items;
  double p_max = 1.0;
  std::string power_unit = "W";  // unit of p_max and Measurements::power: W, mW, uW
  std::optional<double> p_min;  // informational only, never enters J
  double sanity_penalty = 100.0;
  // Gain (dB) below which the circuit counts as non-functional.
  double gain_floor_db = 3.0;

  // Throws ValidationError when p_max <= 0, a weight is negative or a name repeats.
  void validate() const;
  // Watts per power_unit.
  double power_scale() const;
  const SpecItem* find(const std::string& name) const;
};

// Simulated metrics in natural units: gain dB, ugbw MHz, pm deg, thd dB,
// offset mV, power in the unit of SpecSet::p_max. A metric is absent when the
// simulator could not produce it.
struct Measurements {
  std::map<std::string, double> metrics;
  std::optional<double> power;
  bool dc_ok = false;
  bool converged = false;

  std::optional<double> get(const std::string& name) const;
};

struct CostBreakdown {
  double power_term = 0.0;
  std::map<std::string, double> violations;  // already weighted: w_i * V_i
  double sanity_term = 0.0;
  double total = 0.0;
  CostMode mode = CostMode::Feasibility;
};

// max(0, t - y) for lower bounds, max(0, y - t) for upper bounds.
// Throws NumericalError on a non-finite y.
double violation(double y, double target, Direction direction);

// J = P_meas / P_max + sum_i w_i * V_i + sanity. The sanity penalty applies
// when the simulation did not converge, the DC check failed, gain is below the
// floor, power is missing, or any metric named in the spec set is missing.
CostBreakdown universal_cost(const Measurements& meas, const SpecSet& specs);

CostMode mode_of(double j);

// Default penalty weights: gain 1.0, ugbw 0.2, pm 0.1, thd 0.5, offset 10.0.
const std::map<std::string, double>& default_metric_weights();
// gain/ugbw/pm are lower bounds, thd/offset upper bounds.
Direction default_direction(const std::string& metric);

// Convenience builder for the five standard metrics with default weights.
SpecSet make_spec_set(double gain_db, double ugbw_mhz, double pm_deg, double thd_db,
                      double offset_mv, double p_max);

}  // namespace vlmcad
