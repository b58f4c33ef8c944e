#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlmcad/gp.hpp"

namespace vlmcad {

struct Importance {
  Eigen::VectorXd lengthscales;
  Eigen::VectorXd importance;  // S_d = (1/l_d) / sum_j (1/l_j)
  std::vector<std::size_t> ranking;  // indices, most important first
  std::size_t n_points = 0;
};

struct SensitivityReport {
  std::vector<std::string> names;
  Importance global;
  Importance elite;
  double elite_fraction = 0.15;
};

// Normalized inverse lengthscales and their descending order (stable on ties).
Importance importance_from_lengthscales(const Eigen::VectorXd& lengthscales);

// Fits one GP on every (x, J) pair and a second on the lowest-J fraction of
// them. The elite set holds at least min_elite points, or all of them when
// fewer exist.
SensitivityReport sensitivity(const Eigen::MatrixXd& X, const Eigen::VectorXd& j,
                              const std::vector<std::string>& names, double elite_fraction = 0.15,
                              const GpFitConfig& fit = {}, std::size_t min_elite = 10);

}  // namespace vlmcad
