#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ttt/rng.hpp"

namespace ttt::opt {

using Objective = std::function<double(const std::vector<double>&)>;

struct NelderMeadOptions {
  int max_iter = 2000;
  int max_evals = 0;          // 0: no cap beyond max_iter
  double rel_tol = 1e-10;     // stop when (f_worst - f_best) <= rel_tol * (|f_best| + 1)
  double initial_step = 0.1;  // fraction of each box side
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Derivative-free simplex minimization over a box. Every trial point is
// projected onto the box before evaluation; non-finite objective values
// are treated as +inf. The start point is a simplex vertex, so the result is
// never worse than f(start).
NelderMeadResult minimize_box(const Objective& f, std::vector<double> start, const std::vector<double>& lower,
                              const std::vector<double>& upper, const NelderMeadOptions& options = {});

// `samples` stratified points in the unit cube [0,1]^dims.
std::vector<std::vector<double>> latin_hypercube(std::size_t samples, std::size_t dims, Rng& rng);

}  // namespace ttt::opt
