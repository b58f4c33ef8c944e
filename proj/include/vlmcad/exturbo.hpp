#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlmcad/design_point.hpp"
#include "vlmcad/gp.hpp"
#include "vlmcad/netlist.hpp"

namespace vlmcad {

// Axis-aligned box in unit-cube coordinates.
struct Box {
  Eigen::VectorXd lo, hi;

  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const;
  double volume() const;
  static Box unit(Eigen::Index dim);
};

// Maps named design parameters to and from the unit cube spanned by their
// global ranges.
class SearchSpace {
 public:
  SearchSpace() = default;
  SearchSpace(std::vector<std::string> names, const ParamRanges& ranges);

  const std::vector<std::string>& names() const { return names_; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(names_.size()); }

  Eigen::VectorXd to_unit(const DesignPoint& p) const;
  // Only the search dimensions are set; callers merge fixed or tied values.
  DesignPoint from_unit(const Eigen::VectorXd& x) const;

 private:
  std::vector<std::string> names_;
  std::vector<double> lo_, hi_;
};

struct Observation {
  Eigen::VectorXd x;  // unit cube
  double j = 0.0;
};

// Index of the lowest-J seed, earliest on ties. Throws ValidationError when empty.
std::size_t select_center(const std::vector<Observation>& seeds);

// Per dimension: seed_d +/- r_d * span_d / 2 intersected with the global
// interval. Spans are 1 in unit coordinates.
Box local_bounds(const Eigen::VectorXd& seed, const Eigen::VectorXd& span_ratio,
                 const Box& global);
Box local_bounds(const Eigen::VectorXd& seed, double span_ratio, const Box& global);

// Physical-unit form over named ranges.
struct Interval {
  double lo = 0.0, hi = 0.0;
};
std::vector<Interval> local_bounds(const DesignPoint& seed, const std::vector<std::string>& names,
                                   const ParamRanges& ranges, double span_ratio);

// V_local / V_global = prod_d r_d.
double volume_ratio(double span_ratio, int dim);
double volume_ratio(const Eigen::VectorXd& span_ratio);

struct TrustRegion {
  Eigen::VectorXd center;
  double length = 0.8;
  int successes = 0;
  int failures = 0;
  int tau_succ = 3;
  int tau_fail = 3;
  double length_min = 0.0078125;  // 0.5^7
  double length_max = 1.6;
  double length_init = 0.8;
  int worker = 0;
  bool needs_restart = false;
};

// Counts the batch as a success when it improves the incumbent by more than
// 1e-3 * |incumbent|, then resizes: doubling after tau_succ consecutive
// successes (capped at length_max), halving after tau_fail consecutive
// failures. needs_restart is raised once the side drops below length_min.
TrustRegion update_tr(TrustRegion tr, const std::vector<double>& batch_j, double incumbent_j);

// Candidate box of a trust region: side length * w_d with w_d the lengthscales
// normalized to unit geometric mean, clipped to the search box.
Box tr_box(const TrustRegion& tr, const Eigen::VectorXd& lengthscales, const Box& search);

struct ProposalConfig {
  std::size_t pool_per_dim = 100;
  std::size_t pool_max = 5000;
  std::size_t fourier_features = 512;
};

// Thompson sampling: draws a candidate pool inside the trust-region box,
// samples `batch` posterior functions (random Fourier prior plus exact
// conditioning on the training data) and returns each sample's argmin,
// without repeats.
std::vector<Eigen::VectorXd> propose(const TrustRegion& tr, const GpModel& model, const Box& search,
                                     std::size_t batch, std::mt19937_64& rng,
                                     const ProposalConfig& config = {});

// Latin hypercube design of n points inside a box.
std::vector<Eigen::VectorXd> latin_hypercube(std::size_t n, const Box& box, std::mt19937_64& rng);

struct ExturboConfig {
  int workers = 3;
  int batch_size = 4;
  int budget = 400;        // feasibility stage evaluations
  double target = 0.5;     // stage 1 stops once the incumbent reaches this
  int power_budget = 40;   // second stage evaluations
  double feasibility_threshold = 1.0;
  double span_ratio = 0.4;
  bool warm_start = true;
  int cold_init = 0;       // LHS size without seeds; 0 means 2 * dim
  double length_init = 0.8;
  double length_min = 0.0078125;
  double length_max = 1.6;
  int tau_succ = 3;
  int tau_fail = 0;        // 0 means max(3, ceil(dim / batch_size))
  std::size_t max_train_points = 128;
  int fit_restarts = 2;
  int fit_iterations = 50;
  double failure_value = 100.0;  // J recorded when the objective throws
  bool parallel = true;
  std::uint64_t seed = 0;
  ProposalConfig proposal;
};

struct OptRecord {
  int evaluation = 0;  // 0-based index among optimizer evaluations
  int round = 0;
  int worker = 0;
  int stage = 1;  // 0 for the cold-start design, 1 feasibility, 2 power
  Eigen::VectorXd x;
  double j = 0.0;
};

struct OptResult {
  std::vector<OptRecord> history;
  Eigen::VectorXd best_x;
  double best_j = 0.0;
  int stage1_evaluations = 0;
  int stage2_evaluations = 0;
  // 1-based count of evaluations until the first J <= feasibility_threshold.
  std::optional<int> evaluations_to_feasibility;
};

// Must be safe to call concurrently from several workers.
using Objective = std::function<double(const Eigen::VectorXd& unit_x)>;

// Runs W trust-region workers in synchronous rounds. With seeds and
// warm_start, worker w is centered on the w-th best seed (round-robin) and
// never leaves that seed's local box; without seeds an LHS design over the
// whole cube is evaluated first. Seeds are not re-evaluated.
OptResult optimize(const Objective& objective, const std::vector<Observation>& seeds, Eigen::Index dim,
                   const ExturboConfig& config);

}  // namespace vlmcad
