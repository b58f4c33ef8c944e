#include "vlmcad/bench.hpp"

#include <algorithm>
#include <cmath>

#include "vlmcad/error.hpp"

namespace vlmcad {

double NarrowBasin::operator()(const Eigen::VectorXd& x) const {
  double v = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) v += std::max(0.0, std::abs(x(d) - center(d)) - half_width);
  return base + slope * v;
}

NarrowBasin NarrowBasin::random(Eigen::Index dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 0.7);
  NarrowBasin b;
  b.center.resize(dim);
  for (Eigen::Index d = 0; d < dim; ++d) b.center(d) = u(rng);
  return b;
}

Eigen::VectorXd NarrowBasin::adjacent_seed() const {
  Eigen::VectorXd s = center;
  for (Eigen::Index d = 0; d < s.size(); d += 4) s(d) = std::min(1.0, center(d) + 0.3);
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

WarmColdSummary warm_vs_cold(Eigen::Index dim, int runs, std::uint64_t seed, int budget) {
  if (dim < 1 || runs < 1) throw ValidationError("warm_vs_cold needs dim >= 1 and runs >= 1");
  WarmColdSummary out;
  std::vector<double> warm, cold;
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
    std::mt19937_64 rng(s + 100);
    const NarrowBasin f = NarrowBasin::random(dim, rng);
    Objective obj = [&f](const Eigen::VectorXd& x) { return f(x); };

    ExturboConfig cfg;
    cfg.budget = budget;
    cfg.power_budget = 0;
    cfg.target = cfg.feasibility_threshold;
    cfg.seed = s;
    cfg.parallel = false;
    const Eigen::VectorXd x0 = f.adjacent_seed();
    auto rw = optimize(obj, {{x0, f(x0)}}, dim, cfg);
    cfg.warm_start = false;
    auto rc = optimize(obj, {}, dim, cfg);

    WarmColdRun run{s, rw.evaluations_to_feasibility.value_or(budget + 1),
                    rc.evaluations_to_feasibility.value_or(budget + 1)};
    warm.push_back(run.warm);
    cold.push_back(run.cold);
    out.runs.push_back(run);
  }
  out.median_warm = median(warm);
  out.median_cold = median(cold);
  return out;
}

}  // namespace vlmcad
