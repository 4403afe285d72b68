#include "ttt/srdcm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ttt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

Eigen::MatrixXd log_matrix(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double v) { return v > 0 ? std::log(v) : kNegInf; });
}

int draw_index(const Eigen::Ref<const Eigen::VectorXd>& probabilities, double u) {
  double cumulative = 0.0;
  int last_positive = 0;
  for (int j = 0; j < probabilities.size(); ++j) {
    if (probabilities[j] <= 0) continue;
    last_positive = j;
    cumulative += probabilities[j];
    if (u < cumulative) return j;
  }
  return last_positive;
}

}  // namespace

void validate_srdcm(const SrdcmParams& params, bool allow_zero_transitions) {
  const auto m = static_cast<Eigen::Index>(params.regimes.size());
  if (m < 1) throw Error(ErrorKind::Domain, "switching model needs at least one regime");
  if (params.pi0.size() != m) throw Error(ErrorKind::Domain, "pi0 length differs from the regime count");
  if (params.trans_P.rows() != m || params.trans_P.cols() != m)
    throw Error(ErrorKind::Domain, "transition matrix shape differs from the regime count");
  if (!(params.delta_bar > 0)) throw Error(ErrorKind::Domain, "delta_bar must be positive");
  for (const auto& r : params.regimes) validate_params(r);
  for (Eigen::Index j = 0; j < m; ++j)
    if (!(allow_zero_transitions ? params.pi0[j] >= 0 : params.pi0[j] > 0))
      throw Error(ErrorKind::Domain, "pi0 entries must be positive");
  if (std::abs(params.pi0.sum() - 1.0) > 1e-9) throw Error(ErrorKind::Domain, "pi0 must sum to 1");
  for (Eigen::Index h = 0; h < m; ++h) {
    for (Eigen::Index k = 0; k < m; ++k) {
      double p = params.trans_P(h, k);
      if (!(allow_zero_transitions ? p >= 0 : p > 0))
        throw Error(ErrorKind::Domain, "transition probabilities must be positive");
    }
    if (std::abs(params.trans_P.row(h).sum() - 1.0) > 1e-9)
      throw Error(ErrorKind::Domain, "transition matrix rows must sum to 1");
  }
}

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

double regime_bridge_logdensity(double x_prev, double x, double t_prev, double t, const RdcmParams& regime,
                                const BridgeConfig& config) {
  validate_params(regime);
  if (!(t > t_prev)) throw Error(ErrorKind::Ordering, "regime_bridge_logdensity: need t_prev < t");
  const double T = regime.deadline_T;
  if (!(T - t >= config.delta_guard * (1.0 - 1e-9)))
    throw Error(ErrorKind::Range, "regime_bridge_logdensity: t inside the deadline gap");
  Moments step = uncond_moments(x_prev, t_prev, t, regime);
  Moments to_deadline_now = uncond_moments(x, t, T, regime);
  Moments to_deadline_prev = uncond_moments(x_prev, t_prev, T, regime);
  if (!(step.variance >= config.variance_floor))
    throw Error(ErrorKind::NumericDegeneracy, "one-step variance below floor");
  return log_normal_density(x, step.mean, step.variance) +
         log_normal_density(0.0, to_deadline_now.mean, to_deadline_now.variance) -
         log_normal_density(0.0, to_deadline_prev.mean, to_deadline_prev.variance);
}

std::vector<GridMoments> regime_moments(const NodeDiffSeries& series, const SrdcmParams& params,
                                        const BridgeConfig& config) {
  std::vector<GridMoments> out;
  out.reserve(params.regimes.size());
  for (const auto& r : params.regimes) out.emplace_back(r, series.times, config);
  return out;
}

Eigen::MatrixXd emission_matrix(const NodeDiffSeries& series, const std::vector<GridMoments>& moments) {
  const std::size_t n = series.size() > 0 ? series.size() - 1 : 0;
  Eigen::MatrixXd out(n, moments.size());
  for (std::size_t j = 0; j < moments.size(); ++j)
    for (std::size_t r = 0; r < n; ++r) {
      double v = moments[j].log_bridge_density(r + 1, series.values[r], series.values[r + 1]);
      if (std::isnan(v))
        throw Error(ErrorKind::Propagation,
                    "NaN emission at step " + std::to_string(r + 1) + ", regime " + std::to_string(j + 1));
      out(r, j) = v;
    }
  return out;
}

FilterState forward_backward(const Eigen::MatrixXd& log_emission, const SrdcmParams& params,
                             const FilterOptions& options) {
  validate_srdcm(params, options.allow_zero_transitions);
  const Eigen::Index n = log_emission.rows();
  const Eigen::Index m = log_emission.cols();
  if (m != static_cast<Eigen::Index>(params.regime_count()))
    throw Error(ErrorKind::Domain, "emission columns differ from the regime count");
  if (n < 1) throw Error(ErrorKind::SampleSize, "filtering needs at least two observations");
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index j = 0; j < m; ++j)
      if (std::isnan(log_emission(r, j)))
        throw Error(ErrorKind::Propagation, "NaN emission at step " + std::to_string(r + 1));

  const Eigen::MatrixXd logP = log_matrix(params.trans_P);
  FilterState fs;
  fs.log_emission = log_emission;
  fs.log_alpha.resize(n, m);
  fs.log_beta.resize(n, m);
  fs.gamma.resize(n, m);

  for (Eigen::Index j = 0; j < m; ++j) fs.log_alpha(0, j) = std::log(params.pi0[j]) + log_emission(0, j);
  for (Eigen::Index r = 1; r < n; ++r)
    for (Eigen::Index j = 0; j < m; ++j) {
      double acc = kNegInf;
      for (Eigen::Index h = 0; h < m; ++h) acc = lse2(acc, fs.log_alpha(r - 1, h) + logP(h, j));
      fs.log_alpha(r, j) = log_emission(r, j) + acc;
    }

  fs.log_beta.row(n - 1).setZero();
  for (Eigen::Index r = n - 2; r >= 0; --r)
    for (Eigen::Index j = 0; j < m; ++j) {
      double acc = kNegInf;
      for (Eigen::Index k = 0; k < m; ++k)
        acc = lse2(acc, logP(j, k) + log_emission(r + 1, k) + fs.log_beta(r + 1, k));
      fs.log_beta(r, j) = acc;
    }

  {
    double acc = kNegInf;
    for (Eigen::Index j = 0; j < m; ++j) acc = lse2(acc, fs.log_alpha(n - 1, j));
    fs.log_marginal = acc;
  }
  if (!std::isfinite(fs.log_marginal))
    throw Error(ErrorKind::Propagation, "log-marginal is not finite");

  for (Eigen::Index r = 0; r < n; ++r) {
    double norm = kNegInf;
    for (Eigen::Index j = 0; j < m; ++j) norm = lse2(norm, fs.log_alpha(r, j) + fs.log_beta(r, j));
    for (Eigen::Index j = 0; j < m; ++j) fs.gamma(r, j) = std::exp(fs.log_alpha(r, j) + fs.log_beta(r, j) - norm);
  }

  fs.xi.assign(static_cast<std::size_t>(n - 1), Eigen::MatrixXd(m, m));
  for (Eigen::Index r = 0; r + 1 < n; ++r) {
    Eigen::MatrixXd& x = fs.xi[static_cast<std::size_t>(r)];
    double norm = kNegInf;
    for (Eigen::Index h = 0; h < m; ++h)
      for (Eigen::Index k = 0; k < m; ++k) {
        x(h, k) = fs.log_alpha(r, h) + logP(h, k) + log_emission(r + 1, k) + fs.log_beta(r + 1, k);
        norm = lse2(norm, x(h, k));
      }
    x = (x.array() - norm).exp().matrix();
  }
  return fs;
}

FilterState forward_backward(const NodeDiffSeries& series, const SrdcmParams& params, const FilterOptions& options) {
  validate_series(series);
  validate_srdcm(params, options.allow_zero_transitions);
  return forward_backward(emission_matrix(series, regime_moments(series, params, options.bridge)), params, options);
}

double path_conditional_loglik(const NodeDiffSeries& series, std::span<const int> regime_path,
                               const std::vector<GridMoments>& moments) {
  const std::size_t n = series.size() > 0 ? series.size() - 1 : 0;
  if (regime_path.size() != n) throw Error(ErrorKind::Domain, "regime path length must be series length - 1");
  for (int s : regime_path)
    if (s < 0 || static_cast<std::size_t>(s) >= moments.size())
      throw Error(ErrorKind::Range, "regime index out of range: " + std::to_string(s + 1));
  const auto& x = series.values;

  long double blocked = 0.0L;
  for (std::size_t r0 = 0; r0 < n;) {
    std::size_t r1 = r0;
    while (r1 + 1 < n && regime_path[r1 + 1] == regime_path[r0]) ++r1;
    const GridMoments& gm = moments[static_cast<std::size_t>(regime_path[r0])];
    long double block = gm.log_terminal_extended(r1 + 1, x[r1 + 1]) - gm.log_terminal_extended(r0, x[r0]);
    for (std::size_t i = r0 + 1; i <= r1 + 1; ++i) block += gm.log_transition_extended(i, x[i - 1], x[i]);
    blocked += block;
    r0 = r1 + 1;
  }

  double naive = 0.0, magnitude = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const GridMoments& gm = moments[static_cast<std::size_t>(regime_path[r])];
    double terms[3] = {gm.log_transition_density(r + 1, x[r], x[r + 1]), gm.log_terminal_density(r + 1, x[r + 1]),
                       -gm.log_terminal_density(r, x[r])};
    for (double t : terms) {
      naive += t;
      magnitude += std::abs(t);
    }
  }
  if (!(std::abs(blocked - naive) <= 1e-10 * (1.0 + magnitude)))
    throw Error(ErrorKind::InternalContract, "block-telescoped and per-step likelihoods disagree");
  return static_cast<double>(blocked);
}

double path_conditional_loglik(const NodeDiffSeries& series, std::span<const int> regime_path,
                               const SrdcmParams& params, const BridgeConfig& config) {
  validate_series(series);
  return path_conditional_loglik(series, regime_path, regime_moments(series, params, config));
}

double direct_loglik_bruteforce(const NodeDiffSeries& series, const SrdcmParams& params,
                                const FilterOptions& options) {
  validate_series(series);
  validate_srdcm(params, options.allow_zero_transitions);
  if (series.size() < 2) throw Error(ErrorKind::SampleSize, "need at least two observations");
  const std::size_t n = series.size() - 1;
  if (n > kBruteForceMaxSteps)
    throw Error(ErrorKind::SampleSize, "path enumeration needs m^n terms; refusing n = " + std::to_string(n) +
                                           " > " + std::to_string(kBruteForceMaxSteps));
  const int m = static_cast<int>(params.regime_count());
  const auto moments = regime_moments(series, params, options.bridge);
  std::vector<int> path(n, 0);
  std::vector<double> terms;
  for (;;) {
    double log_prob = std::log(params.pi0[path[0]]);
    for (std::size_t r = 1; r < n; ++r) {
      double p = params.trans_P(path[r - 1], path[r]);
      log_prob += p > 0 ? std::log(p) : kNegInf;
    }
    if (log_prob != kNegInf) terms.push_back(log_prob + path_conditional_loglik(series, path, moments));
    std::size_t pos = 0;
    while (pos < n && ++path[pos] == m) path[pos++] = 0;
    if (pos == n) break;
  }
  return log_sum_exp(terms);
}

DecodedPath local_decode(const FilterState& filter) {
  DecodedPath out;
  const Eigen::Index n = filter.gamma.rows();
  out.regime_indices.resize(static_cast<std::size_t>(n));
  out.max_posteriors.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    int best = 0;
    for (Eigen::Index j = 1; j < filter.gamma.cols(); ++j)
      if (filter.gamma(r, j) > filter.gamma(r, best)) best = static_cast<int>(j);
    out.regime_indices[static_cast<std::size_t>(r)] = best;
    out.max_posteriors[static_cast<std::size_t>(r)] = filter.gamma(r, best);
  }
  return out;
}

SrdcmSimulation simulate_srdcm(const SrdcmParams& params, double x0, double t0, std::size_t n_steps,
                               std::uint64_t seed, const BridgeConfig& config) {
  validate_srdcm(params, /*allow_zero_transitions=*/true);
  SrdcmSimulation sim;
  sim.times.resize(n_steps + 1);
  for (std::size_t i = 0; i <= n_steps; ++i) sim.times[i] = t0 + static_cast<double>(i) * params.delta_bar;
  double horizon = std::numeric_limits<double>::infinity();
  for (const auto& r : params.regimes) horizon = std::min(horizon, r.deadline_T - config.delta_guard);
  if (sim.times.back() > horizon + 1e-12)
    throw Error(ErrorKind::Range, "simulation horizon passes min_j T_j - delta_guard");

  std::vector<GridMoments> moments;
  for (const auto& r : params.regimes) moments.emplace_back(r, sim.times, config);

  Rng noise = make_stream(seed, kNoiseStream);
  Rng chain = make_stream(seed, kChainStream);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  sim.path.resize(n_steps + 1);
  sim.regime_path.resize(n_steps);
  sim.path[0] = x0;
  int state = n_steps > 0 ? draw_index(params.pi0, uniform(chain)) : 0;
  for (std::size_t i = 1; i <= n_steps; ++i) {
    sim.regime_path[i - 1] = state;
    auto law = moments[static_cast<std::size_t>(state)].step_bridge_law(i, sim.path[i - 1]);
    sim.path[i] = law.mean_k + std::sqrt(law.variance_sigma2) * normal(noise);
    if (i < n_steps) state = draw_index(params.trans_P.row(state).transpose(), uniform(chain));
  }
  return sim;
}

std::vector<double> srdcm_residuals(const NodeDiffSeries& series, const SrdcmParams& params,
                                    const DecodedPath& decoded, const BridgeConfig& config) {
  validate_series(series);
  const std::size_t n = series.size() > 0 ? series.size() - 1 : 0;
  if (decoded.regime_indices.size() != n) throw Error(ErrorKind::Domain, "decoded path length mismatch");
  const auto moments = regime_moments(series, params, config);
  std::vector<double> z(n);
  for (std::size_t r = 0; r < n; ++r) {
    int j = decoded.regime_indices[r];
    if (j < 0 || static_cast<std::size_t>(j) >= moments.size())
      throw Error(ErrorKind::Range, "decoded regime out of range");
    auto law = moments[static_cast<std::size_t>(j)].step_bridge_law(r + 1, series.values[r]);
    if (!(law.variance_sigma2 > 0)) throw Error(ErrorKind::NumericDegeneracy, "zero bridge variance in residuals");
    z[r] = (series.values[r + 1] - law.mean_k) / std::sqrt(law.variance_sigma2);
  }
  return z;
}

SrdcmParams permute_regimes(const SrdcmParams& params, std::span<const int> order) {
  const auto m = static_cast<Eigen::Index>(order.size());
  SrdcmParams out = params;
  for (Eigen::Index r = 0; r < m; ++r) {
    out.regimes[static_cast<std::size_t>(r)] = params.regimes[static_cast<std::size_t>(order[r])];
    out.pi0[r] = params.pi0[order[r]];
    for (Eigen::Index s = 0; s < m; ++s) out.trans_P(r, s) = params.trans_P(order[r], order[s]);
  }
  return out;
}

std::vector<int> canonical_order(SrdcmParams& params) {
  std::vector<int> order(params.regime_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return params.regimes[static_cast<std::size_t>(a)].deadline_T < params.regimes[static_cast<std::size_t>(b)].deadline_T;
  });
  params = permute_regimes(params, order);
  return order;
}

int srdcm_parameter_count(const SrdcmParams& params, const std::vector<ParamMask>& fixed_masks) {
  const int m = static_cast<int>(params.regime_count());
  int k = m * (m - 1) + (m - 1);
  for (int j = 0; j < m; ++j) {
    const ParamMask mask = static_cast<std::size_t>(j) < fixed_masks.size() ? fixed_masks[j] : ParamMask{};
    k += static_cast<int>(std::count(mask.begin(), mask.end(), false));
  }
  return k;
}

}  // namespace ttt
