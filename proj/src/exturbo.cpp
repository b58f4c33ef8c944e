#include "vlmcad/exturbo.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>

#include "vlmcad/error.hpp"

namespace vlmcad {

bool Box::contains(const Eigen::VectorXd& x, double tol) const {
  return x.size() == lo.size() && (x.array() >= lo.array() - tol).all() && (x.array() <= hi.array() + tol).all();
}

double Box::volume() const { return (hi - lo).prod(); }

Box Box::unit(Eigen::Index dim) { return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)}; }

SearchSpace::SearchSpace(std::vector<std::string> names, const ParamRanges& ranges) : names_(std::move(names)) {
  for (const auto& n : names_) {
    const auto* r = ranges.find(n);
    if (!r) throw ConfigError("no range for search parameter '" + n + "'");
    if (r->fixed()) throw ConfigError("search parameter '" + n + "' has a fixed range");
    lo_.push_back(r->min);
    hi_.push_back(r->max);
  }
}

Eigen::VectorXd SearchSpace::to_unit(const DesignPoint& p) const {
  Eigen::VectorXd x(dim());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto it = p.find(names_[i]);
    if (it == p.end()) throw ValidationError("design point lacks '" + names_[i] + "'");
    x(static_cast<Eigen::Index>(i)) = std::clamp((it->second - lo_[i]) / (hi_[i] - lo_[i]), 0.0, 1.0);
  }
  return x;
}

DesignPoint SearchSpace::from_unit(const Eigen::VectorXd& x) const {
  DesignPoint p;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    double u = std::clamp(x(static_cast<Eigen::Index>(i)), 0.0, 1.0);
    p[names_[i]] = lo_[i] + u * (hi_[i] - lo_[i]);
  }
  return p;
}

std::size_t select_center(const std::vector<Observation>& seeds) {
  if (seeds.empty()) throw ValidationError("select_center: empty seed set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < seeds.size(); ++i) {
    if (seeds[i].j < seeds[best].j) best = i;
  }
  return best;
}

Box local_bounds(const Eigen::VectorXd& seed, const Eigen::VectorXd& span_ratio, const Box& global) {
  if (seed.size() != global.lo.size() || span_ratio.size() != seed.size()) {
    throw ValidationError("local_bounds: dimension mismatch");
  }
  Box b;
  Eigen::VectorXd half = 0.5 * span_ratio.cwiseProduct(global.hi - global.lo);
  b.lo = (seed - half).cwiseMax(global.lo);
  b.hi = (seed + half).cwiseMin(global.hi);
  // A seed outside the global box still yields a non-empty interval at the edge.
  for (Eigen::Index d = 0; d < seed.size(); ++d) {
    if (b.lo(d) > b.hi(d)) {
      double edge = std::clamp(seed(d), global.lo(d), global.hi(d));
      b.lo(d) = b.hi(d) = edge;
    }
  }
  return b;
}

Box local_bounds(const Eigen::VectorXd& seed, double span_ratio, const Box& global) {
  return local_bounds(seed, Eigen::VectorXd::Constant(seed.size(), span_ratio), global);
}

std::vector<Interval> local_bounds(const DesignPoint& seed, const std::vector<std::string>& names,
                                   const ParamRanges& ranges, double span_ratio) {
  std::vector<Interval> out;
  for (const auto& n : names) {
    const auto* r = ranges.find(n);
    if (!r) throw ConfigError("no range for '" + n + "'");
    auto it = seed.find(n);
    if (it == seed.end()) throw ValidationError("seed lacks '" + n + "'");
    double half = 0.5 * span_ratio * (r->max - r->min);
    out.push_back({std::max(r->min, it->second - half), std::min(r->max, it->second + half)});
  }
  return out;
}

double volume_ratio(double span_ratio, int dim) { return std::pow(span_ratio, dim); }

double volume_ratio(const Eigen::VectorXd& span_ratio) { return span_ratio.prod(); }

TrustRegion update_tr(TrustRegion tr, const std::vector<double>& batch_j, double incumbent_j) {
  double best = std::numeric_limits<double>::infinity();
  for (double j : batch_j) best = std::min(best, j);
  bool improved = std::isfinite(incumbent_j) ? best < incumbent_j - 1e-3 * std::abs(incumbent_j)
                                             : std::isfinite(best);
  if (improved) {
    ++tr.successes;
    tr.failures = 0;
  } else {
    ++tr.failures;
    tr.successes = 0;
  }
  if (tr.successes >= tr.tau_succ) {
    tr.length = std::min(2.0 * tr.length, tr.length_max);
    tr.successes = 0;
  } else if (tr.failures >= tr.tau_fail) {
    tr.length /= 2.0;
    tr.failures = 0;
  }
  tr.needs_restart = tr.length < tr.length_min;
  return tr;
}

Box tr_box(const TrustRegion& tr, const Eigen::VectorXd& lengthscales, const Box& search) {
  Eigen::VectorXd w = lengthscales;
  w /= std::exp(w.array().log().mean());
  Box b;
  b.lo = (tr.center - 0.5 * tr.length * w).cwiseMax(search.lo);
  b.hi = (tr.center + 0.5 * tr.length * w).cwiseMin(search.hi);
  return b;
}

std::vector<Eigen::VectorXd> latin_hypercube(std::size_t n, const Box& box, std::mt19937_64& rng) {
  const auto dim = box.lo.size();
  std::vector<Eigen::VectorXd> pts(n, Eigen::VectorXd(dim));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::size_t> perm(n);
  for (Eigen::Index d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      double u = (static_cast<double>(perm[i]) + u01(rng)) / static_cast<double>(n);
      pts[i](d) = box.lo(d) + u * (box.hi(d) - box.lo(d));
    }
  }
  return pts;
}

namespace {

std::vector<Eigen::VectorXd> candidate_pool(const TrustRegion& tr, const Box& tb, std::size_t n,
                                            std::mt19937_64& rng) {
  const auto dim = tr.center.size();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, dim - 1);
  const double p_perturb = std::min(1.0, 20.0 / static_cast<double>(dim));
  std::vector<Eigen::VectorXd> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd x = tr.center;
    bool any = false;
    for (Eigen::Index d = 0; d < dim; ++d) {
      if (u01(rng) < p_perturb) {
        x(d) = tb.lo(d) + u01(rng) * (tb.hi(d) - tb.lo(d));
        any = true;
      }
    }
    if (!any) {
      auto d = pick(rng);
      x(d) = tb.lo(d) + u01(rng) * (tb.hi(d) - tb.lo(d));
    }
    pool.push_back(std::move(x));
  }
  return pool;
}

}  // namespace

std::vector<Eigen::VectorXd> propose(const TrustRegion& tr, const GpModel& model, const Box& search,
                                     std::size_t batch, std::mt19937_64& rng, const ProposalConfig& config) {
  const auto dim = model.dim();
  if (tr.center.size() != dim) throw ValidationError("propose: trust region and model dimensions differ");
  const auto& h = model.hyper();
  Box tb = tr_box(tr, h.lengthscales, search);
  std::size_t pool_size = std::min(config.pool_per_dim * static_cast<std::size_t>(dim), config.pool_max);
  pool_size = std::max(pool_size, batch);
  auto pool = candidate_pool(tr, tb, pool_size, rng);

  Eigen::MatrixXd P(static_cast<Eigen::Index>(pool.size()), dim);
  for (std::size_t i = 0; i < pool.size(); ++i) P.row(static_cast<Eigen::Index>(i)) = pool[i].transpose();
  const Eigen::MatrixXd& X = model.inputs();
  Eigen::MatrixXd Kpx = cross_covariance(P, X, h);

  const auto m = static_cast<Eigen::Index>(std::max<std::size_t>(config.fourier_features, 16));
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double amp = std::sqrt(2.0 * h.signal_var / static_cast<double>(m));
  const double noise_sd = std::sqrt(h.noise_var + model.jitter());

  std::vector<Eigen::VectorXd> chosen;
  std::vector<bool> taken(pool.size(), false);
  for (std::size_t s = 0; s < batch && chosen.size() < pool.size(); ++s) {
    Eigen::MatrixXd omega(dim, m);
    for (Eigen::Index d = 0; d < dim; ++d) {
      for (Eigen::Index k = 0; k < m; ++k) omega(d, k) = n01(rng) / h.lengthscales(d);
    }
    Eigen::RowVectorXd bias(m);
    for (Eigen::Index k = 0; k < m; ++k) bias(k) = phase(rng);
    Eigen::VectorXd w(m);
    for (Eigen::Index k = 0; k < m; ++k) w(k) = n01(rng);

    auto prior = [&](const Eigen::MatrixXd& Z) -> Eigen::VectorXd {
      Eigen::MatrixXd arg = (Z * omega).rowwise() + bias;
      return amp * (arg.array().cos().matrix() * w);
    };
    Eigen::VectorXd eps(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) eps(i) = noise_sd * n01(rng);
    Eigen::VectorXd v = model.solve(model.targets() - prior(X) - eps);
    Eigen::VectorXd f = prior(P) + Kpx * v;

    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || f(i) < f(best)) best = i;
    }
    taken[static_cast<std::size_t>(best)] = true;
    chosen.push_back(pool[static_cast<std::size_t>(best)]);
  }
  return chosen;
}

namespace {

struct Worker {
  TrustRegion tr;
  Box box;
  std::vector<Observation> own;
  Observation best;
  std::mt19937_64 rng;
  std::optional<GpHyper> last_hyper;
};

std::vector<Eigen::VectorXd> worker_proposals(Worker& w, const std::vector<Observation>& shared,
                                              std::size_t count, const ExturboConfig& cfg) {
  const auto dim = w.tr.center.size();
  std::vector<const Observation*> data;
  for (const auto& o : shared) data.push_back(&o);
  for (const auto& o : w.own) data.push_back(&o);

  auto random_fill = [&]() {
    Box tb = tr_box(w.tr, Eigen::VectorXd::Ones(dim), w.box);
    return latin_hypercube(count, tb, w.rng);
  };
  if (data.size() < 2) return random_fill();

  // Training set: the points nearest the trust-region center.
  if (data.size() > cfg.max_train_points) {
    std::stable_sort(data.begin(), data.end(), [&](const Observation* a, const Observation* b) {
      return (a->x - w.tr.center).squaredNorm() < (b->x - w.tr.center).squaredNorm();
    });
    data.resize(cfg.max_train_points);
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()), dim);
  Eigen::VectorXd y(X.rows());
  for (std::size_t i = 0; i < data.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = data[i]->x.transpose();
    y(static_cast<Eigen::Index>(i)) = data[i]->j;
  }
  GpFitConfig fc;
  fc.restarts = cfg.fit_restarts;
  fc.max_iterations = cfg.fit_iterations;
  fc.seed = w.rng();
  fc.initial = w.last_hyper;
  try {
    auto model = fit_gp(X, y, fc);
    w.last_hyper = model.hyper();
    return propose(w.tr, model, w.box, count, w.rng, cfg.proposal);
  } catch (const NumericalError&) {
    return random_fill();
  }
}

}  // namespace

OptResult optimize(const Objective& objective, const std::vector<Observation>& seeds, Eigen::Index dim,
                   const ExturboConfig& cfg) {
  if (dim < 1) throw ValidationError("optimize: dimension must be positive");
  if (cfg.workers < 1 || cfg.batch_size < 1) throw ValidationError("optimize: workers and batch size must be positive");
  if (cfg.budget < 0 || cfg.power_budget < 0) throw ValidationError("optimize: negative budget");
  for (const auto& s : seeds) {
    if (s.x.size() != dim) throw ValidationError("optimize: seed dimension mismatch");
  }
  const Box global = Box::unit(dim);
  const int tau_fail = cfg.tau_fail > 0 ? cfg.tau_fail
                                        : std::max(3, static_cast<int>(std::ceil(static_cast<double>(dim) / cfg.batch_size)));

  OptResult res;
  res.best_j = std::numeric_limits<double>::infinity();
  if (!seeds.empty()) {
    auto c = select_center(seeds);
    res.best_x = seeds[c].x;
    res.best_j = seeds[c].j;
    if (res.best_j <= cfg.feasibility_threshold) res.evaluations_to_feasibility = 0;
  }

  auto safe_eval = [&](const Eigen::VectorXd& x) {
    try {
      double j = objective(x);
      return std::isfinite(j) ? j : cfg.failure_value;
    } catch (const std::exception&) {
      return cfg.failure_value;
    }
  };

  int evaluations = 0;
  int round = 0;
  auto record = [&](int stage, int worker, const Eigen::VectorXd& x, double j) {
    res.history.push_back({evaluations, round, worker, stage, x, j});
    ++evaluations;
    if (j < res.best_j) {
      res.best_j = j;
      res.best_x = x;
    }
    if (!res.evaluations_to_feasibility && j <= cfg.feasibility_threshold) res.evaluations_to_feasibility = evaluations;
  };

  std::mt19937_64 master(cfg.seed);
  const bool warm = cfg.warm_start && !seeds.empty();
  std::vector<Observation> shared = seeds;
  int stage1_used = 0;

  if (!warm && cfg.budget > 0) {
    int n_init = cfg.cold_init > 0 ? cfg.cold_init : static_cast<int>(2 * dim);
    n_init = std::min(n_init, cfg.budget);
    auto design = latin_hypercube(static_cast<std::size_t>(n_init), global, master);
    std::vector<double> js(design.size());
    for (std::size_t i = 0; i < design.size(); ++i) js[i] = safe_eval(design[i]);
    for (std::size_t i = 0; i < design.size(); ++i) {
      record(0, -1, design[i], js[i]);
      shared.push_back({design[i], js[i]});
    }
    stage1_used = n_init;
    ++round;
  }
  if (shared.empty()) {
    res.stage1_evaluations = stage1_used;
    return res;
  }

  std::vector<std::size_t> order(shared.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return shared[a].j < shared[b].j; });
  std::vector<bool> used(shared.size(), false);

  std::vector<Worker> workers(static_cast<std::size_t>(cfg.workers));
  for (int w = 0; w < cfg.workers; ++w) {
    auto& wk = workers[static_cast<std::size_t>(w)];
    auto idx = order[static_cast<std::size_t>(w) % order.size()];
    used[idx] = true;
    wk.best = shared[idx];
    wk.tr.center = shared[idx].x;
    wk.tr.length = wk.tr.length_init = cfg.length_init;
    wk.tr.length_min = cfg.length_min;
    wk.tr.length_max = cfg.length_max;
    wk.tr.tau_succ = cfg.tau_succ;
    wk.tr.tau_fail = tau_fail;
    wk.tr.worker = w;
    wk.box = warm ? local_bounds(wk.tr.center, cfg.span_ratio, global) : global;
    wk.rng.seed(cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(w + 1));
  }
  // The GP of each worker sees the shared seed set (or cold-start design) plus its own data.

  auto run_stage = [&](int stage, int budget, bool stop_at_target) {
    int used_evals = 0;
    while (used_evals < budget) {
      if (stop_at_target && res.best_j <= cfg.target) break;
      std::vector<std::size_t> sizes(workers.size(), 0);
      int left = budget - used_evals;
      for (std::size_t w = 0; w < workers.size() && left > 0; ++w) {
        sizes[w] = static_cast<std::size_t>(std::min(cfg.batch_size, left));
        left -= static_cast<int>(sizes[w]);
      }

      std::vector<std::vector<Eigen::VectorXd>> batches(workers.size());
      if (cfg.parallel && workers.size() > 1) {
        std::vector<std::future<std::vector<Eigen::VectorXd>>> futs;
        for (std::size_t w = 0; w < workers.size(); ++w) {
          futs.push_back(std::async(std::launch::async, [&, w] {
            return sizes[w] ? worker_proposals(workers[w], shared, sizes[w], cfg) : std::vector<Eigen::VectorXd>{};
          }));
        }
        for (std::size_t w = 0; w < workers.size(); ++w) batches[w] = futs[w].get();
      } else {
        for (std::size_t w = 0; w < workers.size(); ++w) {
          if (sizes[w]) batches[w] = worker_proposals(workers[w], shared, sizes[w], cfg);
        }
      }

      std::vector<std::vector<double>> values(workers.size());
      if (cfg.parallel) {
        std::vector<std::vector<std::future<double>>> futs(workers.size());
        for (std::size_t w = 0; w < workers.size(); ++w) {
          for (const auto& x : batches[w]) futs[w].push_back(std::async(std::launch::async, safe_eval, x));
        }
        for (std::size_t w = 0; w < workers.size(); ++w) {
          for (auto& f : futs[w]) values[w].push_back(f.get());
        }
      } else {
        for (std::size_t w = 0; w < workers.size(); ++w) {
          for (const auto& x : batches[w]) values[w].push_back(safe_eval(x));
        }
      }

      for (std::size_t w = 0; w < workers.size(); ++w) {
        if (batches[w].empty()) continue;
        auto& wk = workers[w];
        for (std::size_t i = 0; i < batches[w].size(); ++i) {
          record(stage, static_cast<int>(w), batches[w][i], values[w][i]);
          wk.own.push_back({batches[w][i], values[w][i]});
          ++used_evals;
        }
        std::vector<double> judged = values[w];
        if (stage == 2 && wk.best.j <= cfg.feasibility_threshold) {
          for (double& j : judged) {
            if (j > cfg.feasibility_threshold) j = std::numeric_limits<double>::infinity();
          }
        }
        const double incumbent = wk.best.j;
        for (std::size_t i = 0; i < judged.size(); ++i) {
          if (judged[i] < wk.best.j) wk.best = {batches[w][i], values[w][i]};
        }
        wk.tr = update_tr(wk.tr, judged, incumbent);
        wk.tr.center = wk.best.x;
        if (wk.tr.needs_restart) {
          std::optional<std::size_t> next;
          if (warm) {
            for (auto idx : order) {
              if (!used[idx]) {
                next = idx;
                break;
              }
            }
          }
          if (next) {
            used[*next] = true;
            wk.best = shared[*next];
            wk.box = local_bounds(shared[*next].x, cfg.span_ratio, global);
          }
          wk.tr.center = wk.best.x;
          wk.tr.length = wk.tr.length_init;
          wk.tr.successes = wk.tr.failures = 0;
          wk.tr.needs_restart = false;
          wk.last_hyper.reset();
        }
      }
      ++round;
    }
    return used_evals;
  };

  res.stage1_evaluations = stage1_used + run_stage(1, cfg.budget - stage1_used, true);
  res.stage2_evaluations = run_stage(2, cfg.power_budget, false);
  return res;
}

}  // namespace vlmcad
