#include "ttt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ttt/errors.hpp"

namespace ttt::opt {

namespace {

struct Vertex {
  std::vector<double> x;
  double f;
};

}  // namespace

NelderMeadResult minimize_box(const Objective& f, std::vector<double> start, const std::vector<double>& lower,
                              const std::vector<double>& upper, const NelderMeadOptions& options) {
  const std::size_t dim = start.size();
  if (lower.size() != dim || upper.size() != dim) throw Error(ErrorKind::Domain, "box dimension mismatch");
  NelderMeadResult result;

  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  project(start);
  if (dim == 0) {
    result.x = start;
    result.value = eval(start);
    result.converged = true;
    return result;
  }

  std::vector<Vertex> simplex;
  simplex.reserve(dim + 1);
  simplex.push_back({start, eval(start)});
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> x = start;
    double step = options.initial_step * (upper[i] - lower[i]);
    if (step == 0.0) step = options.initial_step;
    x[i] = start[i] + step;
    if (x[i] > upper[i]) x[i] = start[i] - step;
    project(x);
    simplex.push_back({x, eval(x)});
  }

  auto by_value = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
  std::vector<double> centroid(dim), trial(dim);
  auto point_along = [&](double coef) {
    for (std::size_t i = 0; i < dim; ++i) trial[i] = centroid[i] + coef * (simplex.back().x[i] - centroid[i]);
    project(trial);
    return trial;
  };

  for (result.iterations = 0; result.iterations < options.max_iter; ++result.iterations) {
    std::stable_sort(simplex.begin(), simplex.end(), by_value);
    const double best = simplex.front().f;
    const double worst = simplex.back().f;
    double diameter = 0.0;
    for (std::size_t v = 1; v <= dim; ++v)
      for (std::size_t i = 0; i < dim; ++i) {
        double side = upper[i] - lower[i];
        double d = std::abs(simplex[v].x[i] - simplex[0].x[i]) / (side > 0 ? side : 1.0);
        diameter = std::max(diameter, d);
      }
    if ((std::isfinite(worst) && worst - best <= options.rel_tol * (std::abs(best) + 1.0)) || diameter < 1e-14) {
      result.converged = true;
      break;
    }
    if (options.max_evals > 0 && result.evaluations >= options.max_evals) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < dim; ++v)
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[v].x[i];
    for (double& c : centroid) c /= static_cast<double>(dim);

    std::vector<double> reflected = point_along(-1.0);
    double f_reflected = eval(reflected);
    if (f_reflected < simplex.front().f) {
      std::vector<double> expanded = point_along(-2.0);
      double f_expanded = eval(expanded);
      if (f_expanded < f_reflected)
        simplex.back() = {expanded, f_expanded};
      else
        simplex.back() = {reflected, f_reflected};
      continue;
    }
    if (f_reflected < simplex[dim - 1].f) {
      simplex.back() = {reflected, f_reflected};
      continue;
    }
    bool outside = f_reflected < simplex.back().f;
    std::vector<double> contracted = point_along(outside ? -0.5 : 0.5);
    double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : simplex.back().f)) {
      simplex.back() = {contracted, f_contracted};
      continue;
    }
    for (std::size_t v = 1; v <= dim; ++v) {
      for (std::size_t i = 0; i < dim; ++i)
        simplex[v].x[i] = simplex[0].x[i] + 0.5 * (simplex[v].x[i] - simplex[0].x[i]);
      project(simplex[v].x);
      simplex[v].f = eval(simplex[v].x);
    }
  }
  auto best = std::min_element(simplex.begin(), simplex.end(), by_value);
  result.x = best->x;
  result.value = best->f;
  return result;
}

std::vector<std::vector<double>> latin_hypercube(std::size_t samples, std::size_t dims, Rng& rng) {
  std::vector<std::vector<double>> points(samples, std::vector<double>(dims));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> strata(samples);
  for (std::size_t d = 0; d < dims; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t s = 0; s < samples; ++s)
      points[s][d] = (static_cast<double>(strata[s]) + unit(rng)) / static_cast<double>(samples);
  }
  return points;
}

}  // namespace ttt::opt
