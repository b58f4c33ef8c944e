#include "vlmcad/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vlmcad/error.hpp"

namespace vlmcad {

Importance importance_from_lengthscales(const Eigen::VectorXd& lengthscales) {
  Importance imp;
  imp.lengthscales = lengthscales;
  Eigen::VectorXd inv = lengthscales.cwiseInverse();
  imp.importance = inv / inv.sum();
  imp.ranking.resize(static_cast<std::size_t>(lengthscales.size()));
  std::iota(imp.ranking.begin(), imp.ranking.end(), 0);
  std::stable_sort(imp.ranking.begin(), imp.ranking.end(), [&](std::size_t a, std::size_t b) {
    return imp.importance(static_cast<Eigen::Index>(a)) > imp.importance(static_cast<Eigen::Index>(b));
  });
  return imp;
}

namespace {

Importance fit_importance(const Eigen::MatrixXd& X, const Eigen::VectorXd& j, const GpFitConfig& fit) {
  auto model = fit_gp(X, j, fit);
  auto imp = importance_from_lengthscales(model.hyper().lengthscales);
  imp.n_points = static_cast<std::size_t>(X.rows());
  return imp;
}

}  // namespace

SensitivityReport sensitivity(const Eigen::MatrixXd& X, const Eigen::VectorXd& j,
                              const std::vector<std::string>& names, double elite_fraction,
                              const GpFitConfig& fit, std::size_t min_elite) {
  if (X.rows() != j.size()) throw ValidationError("sensitivity: point and value counts differ");
  if (static_cast<std::size_t>(X.cols()) != names.size()) throw ValidationError("sensitivity: name count differs from dimension");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw ValidationError("sensitivity: elite fraction must lie in (0, 1]");

  SensitivityReport rep;
  rep.names = names;
  rep.elite_fraction = elite_fraction;
  rep.global = fit_importance(X, j, fit);

  const auto n = static_cast<std::size_t>(X.rows());
  auto n_elite = static_cast<std::size_t>(std::ceil(elite_fraction * static_cast<double>(n) - 1e-9));
  n_elite = std::min(n, std::max(n_elite, min_elite));
  if (n_elite == n) {
    rep.elite = rep.global;
    return rep;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return j(static_cast<Eigen::Index>(a)) < j(static_cast<Eigen::Index>(b));
  });
  Eigen::MatrixXd Xe(static_cast<Eigen::Index>(n_elite), X.cols());
  Eigen::VectorXd je(static_cast<Eigen::Index>(n_elite));
  for (std::size_t i = 0; i < n_elite; ++i) {
    Xe.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(order[i]));
    je(static_cast<Eigen::Index>(i)) = j(static_cast<Eigen::Index>(order[i]));
  }
  rep.elite = fit_importance(Xe, je, fit);
  return rep;
}

}  // namespace vlmcad
