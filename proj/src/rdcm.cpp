#include "ttt/rdcm.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "ttt/detail/coefficient_integrals.hpp"

namespace ttt {

namespace {

detail::CoefficientIntegrals<double> integrals(const RdcmParams& p) {
  return {p.a, p.b_minus, p.b_plus, p.theta_minus, p.theta_plus, p.tau, p.deadline_T};
}

double shape(double time_to_deadline, double level, double exponent, double tau, double deadline_T) {
  double ratio = std::max(time_to_deadline / (deadline_T - tau), 0.0);
  if (ratio >= 1.0) return level;
  return level * std::pow(ratio, exponent);
}

bool inside_gap(double t, const RdcmParams& p, const BridgeConfig& config) {
  return p.deadline_T - t >= config.delta_guard * (1.0 - 1e-9);
}

}  // namespace

std::string_view param_name(std::size_t index) {
  static constexpr std::string_view names[kParamCount] = {"a", "b_minus", "b_plus", "theta_minus", "theta_plus"};
  return index < kParamCount ? names[index] : std::string_view("?");
}

ParamVector to_vector(const RdcmParams& p) { return {p.a, p.b_minus, p.b_plus, p.theta_minus, p.theta_plus}; }

RdcmParams with_vector(RdcmParams frame, const ParamVector& v) {
  frame.a = v[0];
  frame.b_minus = v[1];
  frame.b_plus = v[2];
  frame.theta_minus = v[3];
  frame.theta_plus = v[4];
  return frame;
}

void validate_params(const RdcmParams& p) {
  for (double v : {p.a, p.b_minus, p.b_plus, p.theta_minus, p.theta_plus, p.tau, p.deadline_T})
    if (!std::isfinite(v)) throw Error(ErrorKind::Domain, "non-finite model parameter");
  if (!(p.a > 0)) throw Error(ErrorKind::Domain, "a must be positive");
  if (!(p.b_plus > 0)) throw Error(ErrorKind::Domain, "b_plus must be positive");
  if (!(p.theta_minus > 0)) throw Error(ErrorKind::Domain, "theta_minus must be positive");
  if (!(p.theta_plus > 0)) throw Error(ErrorKind::Domain, "theta_plus must be positive");
  if (!(p.tau >= 0 && p.tau < p.deadline_T)) throw Error(ErrorKind::Domain, "need 0 <= tau < deadline_T");
}

bool ParamBox::contains(const RdcmParams& p) const {
  ParamVector v = to_vector(p);
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (!(v[k] >= lower[k] && v[k] <= upper[k])) return false;
  return true;
}

double phi(double time_to_deadline, double b_minus, double b_plus, double tau, double deadline_T) {
  return shape(time_to_deadline, b_minus, b_plus, tau, deadline_T);
}

double g_vol(double time_to_deadline, double theta_minus, double theta_plus, double tau, double deadline_T) {
  return shape(time_to_deadline, theta_minus, theta_plus, tau, deadline_T);
}

double drift_integral(double t0, double t, const RdcmParams& p) { return integrals(p).drift(t0, t); }

double variance_integral(double t0, double t, const RdcmParams& p) { return integrals(p).variance(t0, t); }

Moments uncond_moments(double x0, double t0, double t, const RdcmParams& p) {
  validate_params(p);
  if (t < t0) throw Error(ErrorKind::Ordering, "uncond_moments: t precedes t0");
  if (t > p.deadline_T) throw Error(ErrorKind::Range, "uncond_moments: t beyond the deadline");
  auto I = integrals(p);
  return {std::exp(-p.a * (t - t0)) * x0 + I.drift(t0, t), I.variance(t0, t)};
}

BridgeVarianceRoutes bridge_variance_routes(double t0, double t, const RdcmParams& p) {
  auto I = integrals(p);
  BridgeVarianceRoutes r;
  r.v_t = I.variance(t0, t);
  r.v_T = I.variance(t0, p.deadline_T);
  r.v_T_given_t = I.variance(t, p.deadline_T);
  r.decay_sq = std::exp(-2.0 * p.a * (p.deadline_T - t));
  r.subtraction = r.v_t - r.decay_sq * r.v_t * r.v_t / r.v_T;
  r.factorized = r.v_t * (r.v_T_given_t / (r.decay_sq * r.v_t + r.v_T_given_t));
  return r;
}

BridgeLaw bridge_law(double x0, double t0, double t, const RdcmParams& p, const BridgeConfig& config) {
  validate_params(p);
  if (!(t > t0)) throw Error(ErrorKind::Ordering, "bridge_law: need t0 < t");
  if (t > p.deadline_T) throw Error(ErrorKind::Range, "bridge_law: t beyond the deadline");
  auto I = integrals(p);
  const double T = p.deadline_T;
  const double m_T = std::exp(-p.a * (T - t0)) * x0 + I.drift(t0, T);
  const double v_T = I.variance(t0, T);
  if (!(v_T >= config.variance_floor))
    throw Error(ErrorKind::DegenerateBridge, "terminal variance below the ellipticity floor");

  BridgeLaw law;
  if (t == T) {
    law.uncond_mean_m = m_T;
    law.uncond_var_v = v_T;
    return law;
  }
  if (!inside_gap(t, p, config)) throw Error(ErrorKind::Range, "bridge_law: t inside the deadline gap");

  law.uncond_mean_m = std::exp(-p.a * (t - t0)) * x0 + I.drift(t0, t);
  law.uncond_var_v = I.variance(t0, t);
  const double v_Tt = I.variance(t, T);
  const double e = std::exp(-p.a * (T - t));
  const double v = law.uncond_var_v;

  law.mean_k = law.uncond_mean_m - e * (v / v_T) * m_T;
  law.ratio_R = v_Tt / (e * e * v + v_Tt);
  law.variance_sigma2 = v * law.ratio_R;

  const double subtraction = v - e * e * v * v / v_T;
  const double allowed = 1e-12 * law.variance_sigma2 + 1e-13 * v;
  if (!(std::abs(subtraction - law.variance_sigma2) <= allowed))
    throw Error(ErrorKind::InternalContract, "bridge variance routes disagree");
  if (!(law.variance_sigma2 >= config.variance_floor))
    throw Error(ErrorKind::NumericDegeneracy, "bridge variance below floor");
  return law;
}

double log_normal_density(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

std::vector<double> simulate_path(const GridMoments& moments, double x0, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> path(moments.nodes());
  if (path.empty()) return path;
  path[0] = x0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    auto law = moments.step_bridge_law(i, path[i - 1]);
    path[i] = law.variance_sigma2 > 0 ? law.mean_k + std::sqrt(law.variance_sigma2) * normal(rng) : law.mean_k;
  }
  return path;
}

std::vector<double> simulate_path(const RdcmParams& p, double x0, std::span<const double> grid, std::uint64_t seed,
                                  const BridgeConfig& config) {
  if (grid.empty()) throw Error(ErrorKind::Range, "simulate_path: empty grid");
  if (grid.back() > p.deadline_T) throw Error(ErrorKind::Range, "simulate_path: grid beyond the deadline");
  GridMoments moments(p, grid, config, /*allow_terminal=*/true);
  Rng rng = make_stream(seed, kNoiseStream);
  return simulate_path(moments, x0, rng);
}

double bridge_loglik(std::span<const double> times, std::span<const double> values, const GridMoments& moments) {
  const std::size_t n = values.size();
  if (n != times.size() || n != moments.nodes())
    throw Error(ErrorKind::Domain, "bridge_loglik: series and grid sizes differ");
  if (n == 0) throw Error(ErrorKind::EmptySeries, "bridge_loglik: empty series");
  long double sum = moments.log_terminal_extended(n - 1, values[n - 1]) - moments.log_terminal_extended(0, values[0]);
  for (std::size_t i = 1; i < n; ++i) sum += moments.log_transition_extended(i, values[i - 1], values[i]);
  return static_cast<double>(sum);
}

double bridge_loglik(const NodeDiffSeries& series, const RdcmParams& p, const BridgeConfig& config) {
  validate_series(series);
  GridMoments moments(p, series.times, config);
  return bridge_loglik(series.times, series.values, moments);
}

std::vector<double> rdcm_residuals(const NodeDiffSeries& series, const RdcmParams& p, const BridgeConfig& config) {
  validate_series(series);
  GridMoments moments(p, series.times, config);
  std::vector<double> z;
  z.reserve(series.size() > 0 ? series.size() - 1 : 0);
  for (std::size_t i = 1; i < series.size(); ++i) {
    auto law = moments.step_bridge_law(i, series.values[i - 1]);
    if (!(law.variance_sigma2 > 0)) throw Error(ErrorKind::NumericDegeneracy, "zero bridge variance in residuals");
    z.push_back((series.values[i] - law.mean_k) / std::sqrt(law.variance_sigma2));
  }
  return z;
}

}  // namespace ttt
