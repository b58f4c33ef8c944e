#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vlmcad/error.hpp"
#include "vlmcad/exturbo.hpp"

using namespace vlmcad;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

double sphere(const Eigen::VectorXd& x) { return (x.array() - 0.3).square().sum(); }

ExturboConfig small_config() {
  ExturboConfig c;
  c.parallel = false;
  c.budget = 60;
  c.target = 0.0;
  c.power_budget = 0;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_SUITE("exturbo") {
  TEST_CASE("center is the lowest-J seed, earliest on ties") {
    std::vector<Observation> s = {{vec({0.1}), 3.0}, {vec({0.2}), 1.0}, {vec({0.3}), 1.0}};
    CHECK(select_center(s) == 1);
    CHECK_THROWS_AS(select_center({}), ValidationError);
  }

  TEST_CASE("local bounds clip to the global box") {
    auto b = local_bounds(vec({0.5, 0.05}), 0.4, Box::unit(2));
    CHECK(b.lo(0) == doctest::Approx(0.3));
    CHECK(b.hi(0) == doctest::Approx(0.7));
    CHECK(b.lo(1) == doctest::Approx(0.0));
    CHECK(b.hi(1) == doctest::Approx(0.25));
  }

  TEST_CASE("local bounds in physical units") {
    vlmcad::ParamRanges r;
    r.entries.push_back({"w", 1.0, 11.0, "um", false});
    auto iv = local_bounds(DesignPoint{{"w", 10.0}}, {"w"}, r, 0.4);
    REQUIRE(iv.size() == 1);
    CHECK(iv[0].lo == doctest::Approx(8.0));
    CHECK(iv[0].hi == doctest::Approx(11.0));
  }

  TEST_CASE("volume ratio") {
    CHECK(volume_ratio(0.4, 20) == doctest::Approx(std::pow(0.4, 20)));
    CHECK(volume_ratio(vec({0.5, 0.2})) == doctest::Approx(0.1));
    CHECK(volume_ratio(1.0, 7) == doctest::Approx(1.0));
  }

  TEST_CASE("trust region resizing") {
    TrustRegion tr;
    tr.center = vec({0.5});
    tr.tau_succ = 2;
    tr.tau_fail = 2;
    auto a = update_tr(tr, {0.5}, 1.0);
    CHECK(a.successes == 1);
    a = update_tr(a, {0.4}, 0.5);
    CHECK(a.length == doctest::Approx(1.6));
    CHECK(a.successes == 0);
    a = update_tr(a, {0.2}, 0.4);
    a = update_tr(a, {0.1}, 0.2);
    CHECK(a.length == doctest::Approx(1.6));  // capped

    auto f = update_tr(tr, {1.0}, 1.0);
    CHECK(f.failures == 1);
    f = update_tr(f, {1.0}, 1.0);
    CHECK(f.length == doctest::Approx(0.4));
    // Improvement smaller than the relative threshold is not a success.
    auto g = update_tr(tr, {1.0 - 1e-4}, 1.0);
    CHECK(g.failures == 1);

    TrustRegion tiny = tr;
    tiny.length = 0.01;
    tiny = update_tr(tiny, {1.0}, 1.0);
    tiny = update_tr(tiny, {1.0}, 1.0);
    CHECK(tiny.needs_restart);
  }

  TEST_CASE("latin hypercube stratifies every axis") {
    std::mt19937_64 rng(2);
    Box box{vec({0.0, 0.2}), vec({1.0, 0.6})};
    auto pts = latin_hypercube(10, box, rng);
    REQUIRE(pts.size() == 10);
    for (Eigen::Index d = 0; d < 2; ++d) {
      std::vector<int> bins(10, 0);
      for (const auto& p : pts) {
        CHECK(box.contains(p));
        int k = static_cast<int>((p(d) - box.lo(d)) / (box.hi(d) - box.lo(d)) * 10.0);
        bins[std::min(k, 9)]++;
      }
      for (int c : bins) CHECK(c == 1);
    }
  }

  TEST_CASE("search space maps ranges to the unit cube") {
    auto r = testutil::miller_ranges();
    SearchSpace s({"w1", "cc"}, r);
    auto x = s.to_unit({{"w1", 0.25}, {"cc", 10.0}});
    CHECK(x(0) == doctest::Approx(0.0));
    CHECK(x(1) == doctest::Approx(1.0));
    auto p = s.from_unit(vec({0.5, 0.5}));
    CHECK(p.at("w1") == doctest::Approx(2.625));
  }

  TEST_CASE("sphere converges from a cold start") {
    auto c = small_config();
    c.budget = 80;
    auto res = optimize(sphere, {}, 3, c);
    CHECK(res.best_j < 1e-3);
    CHECK(res.history.size() <= 80);
  }

  TEST_CASE("zero budget returns the best seed") {
    auto c = small_config();
    c.budget = 0;
    std::vector<Observation> seeds = {{vec({0.9, 0.9}), 1.28}, {vec({0.4, 0.4}), 0.02}};
    auto res = optimize(sphere, seeds, 2, c);
    CHECK(res.history.empty());
    CHECK(res.best_j == doctest::Approx(0.02));
    CHECK(res.best_x.isApprox(vec({0.4, 0.4})));
  }

  TEST_CASE("runs are reproducible for a fixed seed") {
    auto c = small_config();
    c.parallel = true;
    c.budget = 24;
    auto a = optimize(sphere, {}, 3, c);
    auto b = optimize(sphere, {}, 3, c);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].x == b.history[i].x);
      CHECK(a.history[i].j == b.history[i].j);
    }
  }

  TEST_CASE("warm-started workers stay inside their seed's local box") {
    auto c = small_config();
    c.budget = 48;
    c.span_ratio = 0.2;
    std::vector<Observation> seeds = {{vec({0.8, 0.8, 0.8}), sphere(vec({0.8, 0.8, 0.8}))},
                                      {vec({0.1, 0.6, 0.2}), sphere(vec({0.1, 0.6, 0.2}))}};
    auto res = optimize(sphere, seeds, 3, c);
    REQUIRE_FALSE(res.history.empty());
    for (const auto& r : res.history) {
      bool inside = false;
      for (const auto& s : seeds) inside = inside || local_bounds(s.x, c.span_ratio, Box::unit(3)).contains(r.x);
      CHECK(inside);
    }
  }

  TEST_CASE("throwing objective records the failure value") {
    auto c = small_config();
    c.budget = 8;
    int calls = 0;
    auto res = optimize(
        [&](const Eigen::VectorXd& x) {
          if (++calls % 2 == 0) throw NumericalError("boom");
          return sphere(x);
        },
        {}, 2, c);
    bool saw = false;
    for (const auto& r : res.history) saw = saw || r.j == c.failure_value;
    CHECK(saw);
  }

  TEST_CASE("power stage continues after feasibility") {
    auto c = small_config();
    c.target = 0.5;
    c.feasibility_threshold = 0.5;
    c.power_budget = 8;
    auto res = optimize(sphere, {{vec({0.35, 0.35}), sphere(vec({0.35, 0.35}))}}, 2, c);
    CHECK(res.stage1_evaluations == 0);
    CHECK(res.stage2_evaluations == 8);
    for (const auto& r : res.history) CHECK(r.stage == 2);
  }
}
