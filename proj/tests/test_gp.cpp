#include <doctest.h>

#include <cmath>
#include <random>

#include "vlmcad/error.hpp"
#include "vlmcad/gp.hpp"

using namespace vlmcad;

namespace {

GpHyper iso(Eigen::Index dim, double l, double sf2 = 1.0, double noise = 1e-4) {
  GpHyper h;
  h.lengthscales = Eigen::VectorXd::Constant(dim, l);
  h.signal_var = sf2;
  h.noise_var = noise;
  return h;
}

}  // namespace

TEST_SUITE("gp") {
  TEST_CASE("kernel at unit distance with unit lengthscale") {
    Eigen::VectorXd a(1), b(1);
    a << 0.0;
    b << 1.0;
    CHECK(kernel(a, b, iso(1, 1.0)) == doctest::Approx(std::exp(-0.5)));
    CHECK(kernel(a, a, iso(1, 1.0, 2.5)) == doctest::Approx(2.5));
  }

  TEST_CASE("ARD kernel weights each axis by its own lengthscale") {
    GpHyper h = iso(2, 1.0);
    h.lengthscales << 1.0, 2.0;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b(2);
    b << 1.0, 2.0;
    CHECK(kernel(a, b, h) == doctest::Approx(std::exp(-1.0)));
  }

  TEST_CASE("single-point evidence") {
    // y = 1, K + noise = 1 + 1: -0.5 * 1/2 - 0.5 ln 2 - 0.5 ln 2 pi
    Eigen::MatrixXd X(1, 1);
    X << 0.3;
    Eigen::VectorXd y(1);
    y << 1.0;
    auto ev = log_marginal_likelihood(X, y, iso(1, 1.0, 1.0, 1.0));
    CHECK(ev.value == doctest::Approx(-0.25 - 0.5 * std::log(2.0) - 0.5 * std::log(2.0 * M_PI)));
  }

  TEST_CASE("evidence gradient matches finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd X(12, 3);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
      for (int d = 0; d < 3; ++d) X(i, d) = u(rng);
      y(i) = std::sin(4.0 * X(i, 0)) + X(i, 1) * X(i, 1);
    }
    GpHyper h = iso(3, 0.5, 1.3, 0.01);
    h.lengthscales << 0.3, 0.7, 1.5;
    auto ev = log_marginal_likelihood(X, y, h);
    const Eigen::VectorXd theta = h.to_log();
    REQUIRE(ev.gradient.size() == theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double eps = 1e-6;
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += eps;
      tm(k) -= eps;
      double fd = (log_marginal_likelihood(X, y, GpHyper::from_log(tp), false).value -
                   log_marginal_likelihood(X, y, GpHyper::from_log(tm), false).value) /
                  (2.0 * eps);
      CHECK(ev.gradient(k) == doctest::Approx(fd).epsilon(1e-4));
    }
  }

  TEST_CASE("log-space round trip") {
    GpHyper h = iso(2, 0.4, 3.0, 1e-3);
    auto back = GpHyper::from_log(h.to_log());
    CHECK(back.lengthscales(1) == doctest::Approx(0.4));
    CHECK(back.signal_var == doctest::Approx(3.0));
    CHECK(back.noise_var == doctest::Approx(1e-3));
  }

  TEST_CASE("duplicated inputs factor with jitter") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Constant(4, 2, 0.5);
    Eigen::VectorXd y(4);
    y << 1.0, 1.0, 1.0, 1.0;
    auto ev = log_marginal_likelihood(X, y, iso(2, 1.0, 1.0, 0.0), false);
    CHECK(ev.jitter > 0.0);
    CHECK(std::isfinite(ev.value));
  }

  TEST_CASE("fit recovers the relevant axis") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd X(40, 2);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
      X(i, 0) = u(rng);
      X(i, 1) = u(rng);
      y(i) = std::sin(6.0 * X(i, 0));
    }
    auto m = fit_gp(X, y, {});
    CHECK(m.hyper().lengthscales(0) < m.hyper().lengthscales(1));
    Eigen::VectorXd q(2);
    q << 0.25, 0.5;
    auto [mu, var] = m.predict(q);
    CHECK(mu == doctest::Approx(std::sin(1.5)).epsilon(0.05));
    CHECK(var >= 0.0);
  }

  TEST_CASE("constant targets leave every lengthscale at its bound") {
    Eigen::MatrixXd X(5, 2);
    X << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.0;
    auto m = fit_gp(X, Eigen::VectorXd::Constant(5, 2.0), {});
    CHECK(m.hyper().lengthscales(0) == doctest::Approx(GpBounds{}.lengthscale_max));
    CHECK(m.hyper().lengthscales(1) == doctest::Approx(GpBounds{}.lengthscale_max));
  }

  TEST_CASE("fit input validation") {
    CHECK_THROWS_AS(fit_gp(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1)), ValidationError);
    CHECK_THROWS_AS(fit_gp(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)), ValidationError);
  }
}
