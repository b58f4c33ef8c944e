#include "vlmcad/gp.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>

#include "vlmcad/error.hpp"

namespace vlmcad {

Eigen::VectorXd GpHyper::to_log() const {
  const auto d = lengthscales.size();
  Eigen::VectorXd t(d + 2);
  t.head(d) = lengthscales.array().log();
  t(d) = std::log(signal_var);
  t(d + 1) = std::log(noise_var);
  return t;
}

GpHyper GpHyper::from_log(const Eigen::VectorXd& theta) {
  const auto d = theta.size() - 2;
  GpHyper h;
  h.lengthscales = theta.head(d).array().exp();
  h.signal_var = std::exp(theta(d));
  h.noise_var = std::exp(theta(d + 1));
  return h;
}

Eigen::VectorXd GpBounds::lower(Eigen::Index dim) const {
  Eigen::VectorXd b(dim + 2);
  b.head(dim).setConstant(std::log(lengthscale_min));
  b(dim) = std::log(signal_var_min);
  b(dim + 1) = std::log(noise_var_min);
  return b;
}

Eigen::VectorXd GpBounds::upper(Eigen::Index dim) const {
  Eigen::VectorXd b(dim + 2);
  b.head(dim).setConstant(std::log(lengthscale_max));
  b(dim) = std::log(signal_var_max);
  b(dim + 1) = std::log(noise_var_max);
  return b;
}

double kernel(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& xp,
              const GpHyper& h) {
  double z = (x - xp).cwiseQuotient(h.lengthscales).squaredNorm();
  return h.signal_var * std::exp(-0.5 * z);
}

Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GpHyper& h) {
  Eigen::RowVectorXd inv_l = h.lengthscales.cwiseInverse().transpose();
  Eigen::MatrixXd as = A.array().rowwise() * inv_l.array();
  Eigen::MatrixXd bs = B.array().rowwise() * inv_l.array();
  Eigen::VectorXd an = as.rowwise().squaredNorm();
  Eigen::VectorXd bn = bs.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * as * bs.transpose()).colwise() + an;
  d2.rowwise() += bn.transpose();
  return h.signal_var * (-0.5 * d2.array().max(0.0)).exp().matrix();
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const GpHyper& h) {
  const auto n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = h.signal_var;
    for (Eigen::Index j = 0; j < i; ++j) {
      K(i, j) = K(j, i) = kernel(X.row(i).transpose(), X.row(j).transpose(), h);
    }
  }
  return K;
}

namespace {

constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-4;

// Factorizes K + noise I, escalating diagonal jitter on failure.
double factorize(const Eigen::MatrixXd& K, double noise, Eigen::LLT<Eigen::MatrixXd>& llt) {
  Eigen::MatrixXd A = K;
  A.diagonal().array() += noise;
  llt.compute(A);
  if (llt.info() == Eigen::Success) return 0.0;
  for (double jitter = kJitterStart; jitter <= kJitterMax * 1.0000001; jitter *= 10.0) {
    Eigen::MatrixXd B = A;
    B.diagonal().array() += jitter;
    llt.compute(B);
    if (llt.info() == Eigen::Success) return jitter;
  }
  throw NumericalError("covariance matrix is not positive definite even with jitter 1e-4");
}

}  // namespace

Evidence log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h,
                                 bool with_gradient) {
  const auto n = X.rows();
  const auto dim = X.cols();
  if (y.size() != n) throw ValidationError("log_marginal_likelihood: X and y sizes differ");
  if (h.lengthscales.size() != dim) throw ValidationError("log_marginal_likelihood: lengthscale count mismatch");

  Eigen::MatrixXd K = gram(X, h);
  Eigen::LLT<Eigen::MatrixXd> llt;
  Evidence ev;
  ev.jitter = factorize(K, h.noise_var, llt);
  Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd& L = llt.matrixLLT();
  double logdet = 2.0 * L.diagonal().array().log().sum();
  ev.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!with_gradient) return ev;

  // d/dtheta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta)
  Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
  Eigen::MatrixXd WK = W.cwiseProduct(K);  // K here is the noise-free kernel part
  ev.gradient.resize(dim + 2);
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double inv_l2 = 1.0 / (h.lengthscales(d) * h.lengthscales(d));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double xj = X(j, d);
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double diff = X(i, d) - xj;
        acc += WK(i, j) * diff * diff;
      }
    }
    ev.gradient(d) = acc * inv_l2;  // symmetric: 2 * (1/2) * lower triangle
  }
  ev.gradient(dim) = 0.5 * WK.sum();
  ev.gradient(dim + 1) = 0.5 * h.noise_var * W.trace();
  return ev;
}

GpModel::GpModel(Eigen::MatrixXd X, const Eigen::VectorXd& y, GpHyper h)
    : X_(std::move(X)), hyper_(std::move(h)) {
  mean_ = y.mean();
  double var = (y.array() - mean_).square().sum() / static_cast<double>(y.size());
  scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  y_ = (y.array() - mean_) / scale_;
  jitter_ = factorize(gram(X_, hyper_), hyper_.noise_var, llt_);
  alpha_ = llt_.solve(y_);
}

std::pair<double, double> GpModel::predict(const Eigen::VectorXd& x) const {
  Eigen::VectorXd k(X_.rows());
  for (Eigen::Index i = 0; i < X_.rows(); ++i) k(i) = kernel(X_.row(i).transpose(), x, hyper_);
  double mean = k.dot(alpha_);
  Eigen::VectorXd v = llt_.matrixL().solve(k);
  double var = std::max(hyper_.signal_var - v.squaredNorm(), 0.0);
  return {mean * scale_ + mean_, var * scale_ * scale_};
}

Eigen::VectorXd GpModel::solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }

namespace {

// Projected L-BFGS minimization of f(theta) = -log evidence inside [lo, hi].
struct Minimizer {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  Eigen::VectorXd lo, hi;
  int max_iterations;

  std::pair<double, Eigen::VectorXd> eval(const Eigen::VectorXd& theta) const {
    try {
      auto ev = log_marginal_likelihood(X, y, GpHyper::from_log(theta));
      if (!std::isfinite(ev.value) || !ev.gradient.allFinite()) {
        return {std::numeric_limits<double>::infinity(), Eigen::VectorXd::Zero(theta.size())};
      }
      return {-ev.value, -ev.gradient};
    } catch (const NumericalError&) {
      return {std::numeric_limits<double>::infinity(), Eigen::VectorXd::Zero(theta.size())};
    }
  }

  Eigen::VectorXd project(Eigen::VectorXd t) const { return t.cwiseMax(lo).cwiseMin(hi); }

  // Zeroes gradient components that push against an active bound.
  Eigen::VectorXd free_mask(const Eigen::VectorXd& t, const Eigen::VectorXd& g) const {
    Eigen::VectorXd m = Eigen::VectorXd::Ones(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if ((t(i) <= lo(i) + 1e-12 && g(i) > 0.0) || (t(i) >= hi(i) - 1e-12 && g(i) < 0.0)) m(i) = 0.0;
    }
    return m;
  }

  std::pair<double, Eigen::VectorXd> run(Eigen::VectorXd theta) const {
    theta = project(theta);
    auto [f, g] = eval(theta);
    if (!std::isfinite(f)) return {f, theta};
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;  // (s, y)
    constexpr std::size_t kMemory = 8;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::VectorXd mask = free_mask(theta, g);
      Eigen::VectorXd pg = g.cwiseProduct(mask);
      if (pg.lpNorm<Eigen::Infinity>() < 1e-6) break;

      // Two-loop recursion restricted to free coordinates.
      Eigen::VectorXd q = pg;
      std::vector<double> a(mem.size());
      for (std::size_t k = mem.size(); k-- > 0;) {
        const auto& [s, yv] = mem[k];
        double rho = 1.0 / yv.dot(s);
        a[k] = rho * s.cwiseProduct(mask).dot(q);
        q -= a[k] * yv.cwiseProduct(mask);
      }
      if (!mem.empty()) {
        const auto& [s, yv] = mem.back();
        q *= s.dot(yv) / yv.dot(yv);
      } else {
        q /= std::max(1.0, pg.norm());
      }
      for (std::size_t k = 0; k < mem.size(); ++k) {
        const auto& [s, yv] = mem[k];
        double rho = 1.0 / yv.dot(s);
        double b = rho * yv.cwiseProduct(mask).dot(q);
        q += (a[k] - b) * s.cwiseProduct(mask);
      }
      Eigen::VectorXd dir = -q.cwiseProduct(mask);
      if (dir.dot(pg) >= 0.0) dir = -pg / std::max(1.0, pg.norm());

      double step = 1.0;
      bool accepted = false;
      Eigen::VectorXd next;
      double fn = 0.0;
      Eigen::VectorXd gn;
      for (int ls = 0; ls < 30; ++ls) {
        next = project(theta + step * dir);
        std::tie(fn, gn) = eval(next);
        if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(next - theta)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      Eigen::VectorXd s = next - theta, yv = gn - g;
      if (s.dot(yv) > 1e-10) {
        mem.emplace_back(s, yv);
        if (mem.size() > kMemory) mem.pop_front();
      }
      bool converged = std::abs(f - fn) < 1e-9 * std::max(1.0, std::abs(f));
      theta = next;
      f = fn;
      g = gn;
      if (converged) break;
    }
    return {f, theta};
  }
};

}  // namespace

GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitConfig& config) {
  if (X.rows() < 2) throw ValidationError("fit_gp: need at least two points");
  if (y.size() != X.rows()) throw ValidationError("fit_gp: X has " + std::to_string(X.rows()) +
                                                  " rows but y has " + std::to_string(y.size()));
  if (X.cols() < 1) throw ValidationError("fit_gp: zero-dimensional inputs");
  const auto dim = X.cols();
  const auto& b = config.bounds;

  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(y.size());
  if (var <= 1e-24) {
    GpHyper flat;
    flat.lengthscales = Eigen::VectorXd::Constant(dim, b.lengthscale_max);
    flat.signal_var = b.signal_var_min;
    flat.noise_var = std::max(b.noise_var_min, 1e-6);
    return GpModel(X, y, flat);
  }
  Eigen::VectorXd ys = (y.array() - mean) / std::sqrt(var);

  Minimizer opt{X, ys, b.lower(dim), b.upper(dim), config.max_iterations};
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  double best_f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  for (int r = 0; r < std::max(1, config.restarts); ++r) {
    Eigen::VectorXd theta0(dim + 2);
    if (r == 0) {
      GpHyper init;
      if (config.initial && config.initial->lengthscales.size() == dim) {
        init = *config.initial;
      } else {
        init.lengthscales = Eigen::VectorXd::Constant(dim, 0.5);
        init.signal_var = 1.0;
        init.noise_var = 1e-3;
      }
      theta0 = init.to_log();
    } else {
      for (Eigen::Index d = 0; d < dim; ++d) {
        theta0(d) = std::log(0.05) + u01(rng) * (std::log(b.lengthscale_max) - std::log(0.05));
      }
      theta0(dim) = std::log(0.5) + u01(rng) * (std::log(2.0) - std::log(0.5));
      theta0(dim + 1) = std::log(1e-6) + u01(rng) * (std::log(1e-2) - std::log(1e-6));
    }
    auto [f, theta] = opt.run(theta0);
    if (f < best_f) {
      best_f = f;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best_f)) throw NumericalError("fit_gp: every restart failed to factorize");
  return GpModel(X, y, GpHyper::from_log(best_theta));
}

}  // namespace vlmcad
