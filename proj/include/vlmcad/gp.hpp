#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace vlmcad {

// Hyperparameters of the ARD squared-exponential kernel
//   k(x, x') = sf2 * exp(-sum_d (x_d - x'_d)^2 / (2 l_d^2))
// plus i.i.d. observation noise of variance noise_var.
struct GpHyper {
  Eigen::VectorXd lengthscales;
  double signal_var = 1.0;
  double noise_var = 1e-4;

  // (log l_1..log l_D, log sf2, log noise_var)
  Eigen::VectorXd to_log() const;
  static GpHyper from_log(const Eigen::VectorXd& theta);
};

struct GpBounds {
  double lengthscale_min = 0.005;
  double lengthscale_max = 2.0;
  double signal_var_min = 0.05;
  double signal_var_max = 20.0;
  double noise_var_min = 1e-8;
  double noise_var_max = 0.5;

  Eigen::VectorXd lower(Eigen::Index dim) const;  // log space
  Eigen::VectorXd upper(Eigen::Index dim) const;
};

double kernel(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& xp,
              const GpHyper& h);

// Rows of X are points. Noise-free covariance.
Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const GpHyper& h);
Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GpHyper& h);

struct Evidence {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d to_log()
  double jitter = 0.0;       // diagonal jitter that made the factorization succeed
};

// Exact Gaussian log evidence log p(y | X, h) with zero prior mean. Retries the
// Cholesky factorization with jitter 1e-8, 1e-7, ..., 1e-4 before throwing
// NumericalError.
Evidence log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h,
                                 bool with_gradient = true);

struct GpFitConfig {
  int restarts = 5;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  GpBounds bounds;
  std::optional<GpHyper> initial;  // first restart starts here when set
};

// Conditioned GP over standardized targets. predict() returns values in the
// original target units.
class GpModel {
 public:
  GpModel() = default;
  GpModel(Eigen::MatrixXd X, const Eigen::VectorXd& y, GpHyper h);

  const GpHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return X_; }
  const Eigen::VectorXd& targets() const { return y_; }  // standardized
  double target_mean() const { return mean_; }
  double target_scale() const { return scale_; }
  double jitter() const { return jitter_; }
  Eigen::Index dim() const { return X_.cols(); }
  Eigen::Index size() const { return X_.rows(); }

  std::pair<double, double> predict(const Eigen::VectorXd& x) const;  // mean, variance
  // Solves (K + noise I) v = b with the cached factorization.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double mean_ = 0.0, scale_ = 1.0;
  GpHyper hyper_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

// Maximizes the log evidence over bounded log-hyperparameters with
// multi-restart projected L-BFGS. Targets are standardized first; a constant
// target vector carries no information and yields every lengthscale at its
// upper bound. Throws ValidationError on fewer than two points or a size mismatch.
GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitConfig& config = {});

}  // namespace vlmcad
