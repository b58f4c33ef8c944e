#include <doctest.h>

#include <random>

#include "vlmcad/sensitivity.hpp"

using namespace vlmcad;

TEST_SUITE("sensitivity") {
  TEST_CASE("importance normalizes inverse lengthscales") {
    Eigen::VectorXd l(3);
    l << 1.0, 0.5, 1.0;
    auto imp = importance_from_lengthscales(l);
    CHECK(imp.importance(1) == doctest::Approx(0.5));
    CHECK(imp.importance(0) == doctest::Approx(0.25));
    CHECK(imp.importance.sum() == doctest::Approx(1.0));
    CHECK(imp.ranking == std::vector<std::size_t>{1, 0, 2});
  }

  TEST_CASE("the driving variable ranks first") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 60;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd j(n);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) X(i, d) = u(rng);
      j(i) = 4.0 * X(i, 0) * X(i, 0) + 0.05 * X(i, 2);
    }
    auto s = sensitivity(X, j, {"x1", "x2", "x3"});
    CHECK(s.global.ranking.front() == 0);
    CHECK(s.global.importance.sum() == doctest::Approx(1.0));
    CHECK(s.elite.importance.sum() == doctest::Approx(1.0));
    CHECK(s.global.n_points == n);
    CHECK(s.elite.n_points == 10);  // 15% of 60 is below the floor of 10
  }

  TEST_CASE("an elite fraction of one reproduces the global ranking") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd X(30, 2);
    Eigen::VectorXd j(30);
    for (int i = 0; i < 30; ++i) {
      X(i, 0) = u(rng);
      X(i, 1) = u(rng);
      j(i) = std::sin(5.0 * X(i, 1)) + 0.1 * X(i, 0);
    }
    auto s = sensitivity(X, j, {"a", "b"}, 1.0);
    CHECK(s.elite.n_points == 30);
    CHECK(s.elite.ranking == s.global.ranking);
    CHECK(s.elite.lengthscales.isApprox(s.global.lengthscales));
  }

  TEST_CASE("a constant objective is uniformly insensitive") {
    Eigen::MatrixXd X(8, 4);
    X.setRandom();
    auto s = sensitivity(X, Eigen::VectorXd::Constant(8, 0.7), {"a", "b", "c", "d"});
    for (Eigen::Index d = 0; d < 4; ++d) CHECK(s.global.importance(d) == doctest::Approx(0.25));
  }
}
