#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vlmcad/exturbo.hpp"

namespace vlmcad {

// Synthetic constrained objective with a small feasible basin:
//   f(x) = base + slope * sum_d max(0, |x_d - c_d| - half_width)
// Feasible (f <= 1) only close to the box around c. With the defaults the
// flat bottom occupies 0.5^D of the unit cube.
struct NarrowBasin {
  Eigen::VectorXd center;
  double half_width = 0.25;
  double base = 0.2;
  double slope = 5.0;

  double operator()(const Eigen::VectorXd& x) const;
  // Center drawn uniformly from [0.3, 0.7]^dim.
  static NarrowBasin random(Eigen::Index dim, std::mt19937_64& rng);
  // A seed just outside the basin: every fourth coordinate pushed 0.3 away.
  Eigen::VectorXd adjacent_seed() const;
};

struct WarmColdRun {
  std::uint64_t seed = 0;
  int warm = 0;  // evaluations to feasibility; budget + 1 when never reached
  int cold = 0;
};

struct WarmColdSummary {
  std::vector<WarmColdRun> runs;
  double median_warm = 0.0;
  double median_cold = 0.0;
};

// Paired runs on NarrowBasin instances: warm-started from adjacent_seed()
// versus cold-started from a Latin hypercube design.
WarmColdSummary warm_vs_cold(Eigen::Index dim, int runs, std::uint64_t seed, int budget = 400);

double median(std::vector<double> v);

}  // namespace vlmcad
