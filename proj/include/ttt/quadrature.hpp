#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <type_traits>
#include <vector>

namespace ttt::quad {

inline constexpr int kDefaultNodes = 32;
inline constexpr int kMaxGradedLevels = 1000;

template <class Real>
struct BasicGaussLegendreRule {
  std::vector<Real> nodes;  // on [-1, 1]
  std::vector<Real> weights;
};
using GaussLegendreRule = BasicGaussLegendreRule<double>;

// Newton iteration on P_n carried out in Real.
template <class Real>
BasicGaussLegendreRule<Real> compute_gauss_legendre_rule(int n) {
  using std::abs;
  BasicGaussLegendreRule<Real> rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const Real tol = std::numeric_limits<Real>::epsilon() * 4;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    Real x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    Real dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      Real p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        Real p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      Real step = p1 / dp;
      x -= step;
      if (abs(step) <= tol) break;
    }
    // one more derivative evaluation at the converged node
    Real p0 = 1, p1 = x;
    for (int k = 2; k <= n; ++k) {
      Real p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1);
    Real w = 2 / ((1 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

// Cached double rule (nodes computed in long double).
const GaussLegendreRule& gauss_legendre_rule(int n);

template <class Real>
const BasicGaussLegendreRule<Real>& rule_for(int n) {
  if constexpr (std::is_same_v<Real, double>) {
    return gauss_legendre_rule(n);
  } else {
    static std::mutex mutex;
    static std::map<int, BasicGaussLegendreRule<Real>> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre_rule<Real>(n)).first;
    return it->second;
  }
}

template <class Real, class F>
Real gauss_legendre(F&& f, Real lo, Real hi, int n = kDefaultNodes) {
  if (hi == lo) return Real(0);
  const auto& rule = rule_for<Real>(n);
  const Real half = (hi - lo) / 2;
  const Real mid = (hi + lo) / 2;
  Real sum = 0;
  for (int k = 0; k < n; ++k) sum += rule.weights[k] * f(mid + half * rule.nodes[k]);
  return half * sum;
}

// Integrates f(w) over [0, width] on geometrically graded panels
// [width/2^(k+1), width/2^k], refined toward w = 0 until the innermost panel
// is no wider than `finest` (finest <= 0 means the maximum depth). Suited to
// integrands with an algebraic singularity or a steep exponential at (or just
// beyond) w = 0. The innermost panel is summed first.
template <class Real, class F>
Real integrate_graded(F&& f, Real width, Real finest, int n = kDefaultNodes) {
  using std::ldexp;
  if (!(width > 0)) return Real(0);
  int levels = kMaxGradedLevels;
  if (finest > 0) {
    double ratio = static_cast<double>(width / finest);
    levels = ratio > 1.0 ? static_cast<int>(std::ceil(std::log2(ratio))) : 0;
  }
  levels = std::clamp(levels, 0, kMaxGradedLevels);
  Real sum = gauss_legendre(f, Real(0), Real(ldexp(width, -levels)), n);
  for (int k = levels - 1; k >= 0; --k) sum += gauss_legendre(f, Real(ldexp(width, -(k + 1))), Real(ldexp(width, -k)), n);
  return sum;
}

}  // namespace ttt::quad
