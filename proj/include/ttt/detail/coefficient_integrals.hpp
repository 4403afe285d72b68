#pragma once

// Integrals of the deadline-shaped coefficients against the mean-reversion
// kernel, generic in the scalar type so that tests can re-evaluate
// cancellation-prone formulas in extended precision.

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include <boost/math/special_functions/expm1.hpp>

#include "ttt/quadrature.hpp"

namespace ttt::detail {

template <class Real>
Real expm1_any(const Real& x) {
  if constexpr (std::is_floating_point_v<Real>)
    return std::expm1(x);
  else
    return boost::math::expm1(x);
}

template <class Real>
struct CoefficientIntegrals {
  Real a, b_minus, b_plus, theta_minus, theta_plus, tau, deadline;

  // a * int_{s0}^{s1} e^{-a(s1-s)} phi(T-s) ds
  Real drift(Real s0, Real s1) const {
    using std::exp;
    if (!(s1 > s0)) return Real(0);
    if (s1 <= tau) return -b_minus * expm1_any<Real>(-a * (s1 - s0));
    if (s0 >= tau) return post_tau(s0, s1, a, b_plus) * a * b_minus;
    Real pre = -b_minus * expm1_any<Real>(-a * (tau - s0));
    return exp(-a * (s1 - tau)) * pre + post_tau(tau, s1, a, b_plus) * a * b_minus;
  }

  // int_{s0}^{s1} e^{-2a(s1-s)} g(T-s)^2 ds
  Real variance(Real s0, Real s1) const {
    using std::exp;
    if (!(s1 > s0)) return Real(0);
    const Real th2 = theta_minus * theta_minus;
    if (s1 <= tau) return -th2 * expm1_any<Real>(-2 * a * (s1 - s0)) / (2 * a);
    if (s0 >= tau) return post_tau(s0, s1, 2 * a, 2 * theta_plus) * th2;
    Real pre = -th2 * expm1_any<Real>(-2 * a * (tau - s0)) / (2 * a);
    return exp(-2 * a * (s1 - tau)) * pre + post_tau(tau, s1, 2 * a, 2 * theta_plus) * th2;
  }

 private:
  // int_0^W exp(-c w) ((u + w)/L)^p dw with W = s1 - s0, u = T - s1, L = T - tau,
  // i.e. the post-tau integral written in the distance w back from s1.
  Real post_tau(Real s0, Real s1, Real c, Real p) const {
    using std::exp;
    using std::log;
    using std::min;
    using std::pow;
    const Real width = s1 - s0;
    const Real u = deadline - s1;
    const Real span = deadline - tau;
    const Real scale = Real(4) / c;
    Real finest;
    if (u > 0) {
      finest = min(u, scale);
    } else {
      // pure power singularity at w = 0: stop refining once the neglected
      // inner mass falls below ~eps of the total
      const Real tol = std::numeric_limits<Real>::epsilon() / 1000;
      finest = min(Real(pow(tol, Real(1) / (p + 1)) * min(width, (p + 1) / c)), scale);
    }
    auto integrand = [&](Real w) { return exp(-c * w + p * log((u + w) / span)); };
    return quad::integrate_graded(integrand, width, finest);
  }
};

}  // namespace ttt::detail
