#include <doctest.h>

#include <cmath>
#include <set>

#include "ttt/errors.hpp"
#include "ttt/optimize.hpp"
#include "ttt/parallel.hpp"
#include "ttt/quadrature.hpp"
#include "ttt/rng.hpp"

using namespace ttt;

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
  const double v = quad::gauss_legendre([](double x) { return std::pow(x, 61); }, 0.0, 1.0);
  CHECK(v == doctest::Approx(1.0 / 62.0).epsilon(1e-14));
  const auto& rule = quad::gauss_legendre_rule(32);
  double w = 0.0;
  for (double x : rule.weights) w += x;
  CHECK(w == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("graded panels resolve algebraic endpoint behaviour") {
  for (double p : {0.1, 0.5, 2.7}) {
    const double v = quad::integrate_graded([&](double w) { return std::pow(w, p); }, 1.0, 1e-30);
    CHECK(std::abs(v - 1.0 / (p + 1.0)) < 1e-14);
  }
  const double e = quad::integrate_graded([](double w) { return std::exp(-200.0 * w); }, 3.0, 4.0 / 200.0);
  CHECK(std::abs(e - (1.0 - std::exp(-600.0)) / 200.0) < 1e-16);
}

TEST_CASE("stream seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(stream_seed(42, k));
  CHECK(seen.size() == 1000);
  CHECK(stream_seed(42, 3) == stream_seed(42, 3));
  CHECK(stream_seed(42, 3) != stream_seed(43, 3));
}

TEST_CASE("bounded simplex finds an interior minimum and respects the box") {
  auto rosen = [](const std::vector<double>& x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  opt::NelderMeadOptions o;
  o.rel_tol = 1e-14;
  o.max_iter = 5000;
  auto r = opt::minimize_box(rosen, {-1.0, 1.5}, {-2.0, -2.0}, {2.0, 2.0}, o);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
  auto edge = opt::minimize_box([](const std::vector<double>& x) { return x[0]; }, {0.5}, {0.2}, {1.0}, o);
  CHECK(edge.x[0] == doctest::Approx(0.2));
  auto start_best = opt::minimize_box([](const std::vector<double>& x) { return x[0] * x[0]; }, {0.0}, {-1.0}, {1.0}, o);
  CHECK(start_best.value == 0.0);
}

TEST_CASE("latin hypercube stratifies each coordinate") {
  Rng rng(5);
  const auto pts = opt::latin_hypercube(10, 3, rng);
  for (std::size_t d = 0; d < 3; ++d) {
    std::set<int> strata;
    for (const auto& p : pts) strata.insert(static_cast<int>(p[d] * 10));
    CHECK(strata.size() == 10);
  }
}

TEST_CASE("parallel_for writes every slot and rethrows") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i));
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}
