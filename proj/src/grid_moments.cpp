#include <cmath>
#include <numbers>

#include "ttt/detail/coefficient_integrals.hpp"
#include "ttt/rdcm.hpp"

namespace ttt {

GridMoments::GridMoments(const RdcmParams& p, std::span<const double> times, const BridgeConfig& config,
                         bool allow_terminal)
    : params_(p), config_(config), times_(times.begin(), times.end()) {
  validate_params(p);
  const std::size_t n = times_.size();
  if (n == 0) throw Error(ErrorKind::EmptySeries, "empty time grid");
  const double T = p.deadline_T;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && !(times_[i] > times_[i - 1]))
      throw Error(ErrorKind::Ordering, "grid times not strictly increasing at index " + std::to_string(i));
    const bool terminal = allow_terminal && i + 1 == n && times_[i] == T;
    if (!terminal && !(T - times_[i] >= config.delta_guard * (1.0 - 1e-9)))
      throw Error(ErrorKind::Range, "time " + std::to_string(times_[i]) + " violates the deadline gap");
  }

  decay_.assign(n, 1.0);
  drift_.assign(n, 0.0);
  var_.assign(n, 0.0);
  decay_ext_.assign(n, 1.0L);
  detail::CoefficientIntegrals<double> I{p.a, p.b_minus, p.b_plus, p.theta_minus, p.theta_plus, p.tau, T};
  for (std::size_t i = 1; i < n; ++i) {
    const double lo = times_[i - 1], hi = times_[i];
    decay_ext_[i] = std::exp(-static_cast<long double>(p.a) * (static_cast<long double>(hi) - lo));
    decay_[i] = static_cast<double>(decay_ext_[i]);
    drift_[i] = I.drift(lo, hi);
    var_[i] = I.variance(lo, hi);
  }

  term_decay_.assign(n, 1.0L);
  term_drift_.assign(n, 0.0L);
  term_var_.assign(n, 0.0L);
  const double last = times_[n - 1];
  if (last < T) {
    detail::CoefficientIntegrals<long double> J{p.a, p.b_minus, p.b_plus, p.theta_minus, p.theta_plus, p.tau, T};
    term_decay_[n - 1] = std::exp(-static_cast<long double>(p.a) * (static_cast<long double>(T) - last));
    term_drift_[n - 1] = J.drift(last, T);
    term_var_[n - 1] = J.variance(last, T);
  }
  for (std::size_t i = n - 1; i > 0; --i) {
    const long double e = term_decay_[i];
    term_var_[i - 1] = e * e * var_[i] + term_var_[i];
    term_drift_[i - 1] = e * drift_[i] + term_drift_[i];
    term_decay_[i - 1] = std::exp(-static_cast<long double>(p.a) * (static_cast<long double>(T) - times_[i - 1]));
  }
  if (!(term_var_[0] >= config.variance_floor))
    throw Error(ErrorKind::DegenerateBridge, "terminal variance below the ellipticity floor");
}

long double GridMoments::log_terminal_extended(std::size_t i, double x) const {
  const long double v = term_var_[i];
  if (!(v >= config_.variance_floor))
    throw Error(ErrorKind::DegenerateBridge, "terminal variance below the ellipticity floor at node " + std::to_string(i));
  const long double mean = term_decay_[i] * x + term_drift_[i];
  return -0.5L * std::log(2.0L * std::numbers::pi_v<long double> * v) - mean * mean / (2.0L * v);
}

double GridMoments::log_terminal_density(std::size_t i, double x) const {
  return static_cast<double>(log_terminal_extended(i, x));
}

double GridMoments::log_terminal_ratio(std::size_t i, double x_i, std::size_t j, double x_j) const {
  return static_cast<double>(log_terminal_extended(j, x_j) - log_terminal_extended(i, x_i));
}

long double GridMoments::log_transition_extended(std::size_t i, double x_prev, double x) const {
  const long double v = var_[i];
  if (!(v >= config_.variance_floor))
    throw Error(ErrorKind::NumericDegeneracy, "one-step variance below floor at step " + std::to_string(i));
  const long double e = x - (decay_ext_[i] * x_prev + drift_[i]);
  return -0.5L * std::log(2.0L * std::numbers::pi_v<long double> * v) - e * e / (2.0L * v);
}

double GridMoments::log_transition_density(std::size_t i, double x_prev, double x) const {
  const double v = var_[i];
  if (!(v >= config_.variance_floor))
    throw Error(ErrorKind::NumericDegeneracy, "one-step variance below floor at step " + std::to_string(i));
  return log_normal_density(x, step_mean(i, x_prev), v);
}

GridMoments::StepLaw GridMoments::step_bridge_law(std::size_t i, double x_prev) const {
  const double m = step_mean(i, x_prev);
  const double v = var_[i];
  const double vt_next = term_var_[i];
  if (vt_next == 0.0) return {0.0, 0.0};  // step onto the deadline
  const double e = term_decay_[i];
  const double vt_prev = term_var_[i - 1];
  const double ratio = vt_next / vt_prev;
  return {ratio * m - e * v * static_cast<double>(term_drift_[i]) / vt_prev, v * ratio};
}

double GridMoments::log_bridge_density(std::size_t i, double x_prev, double x) const {
  auto law = step_bridge_law(i, x_prev);
  if (!(law.variance_sigma2 >= config_.variance_floor))
    throw Error(ErrorKind::NumericDegeneracy, "bridge variance below floor at step " + std::to_string(i));
  return log_normal_density(x, law.mean_k, law.variance_sigma2);
}

}  // namespace ttt
