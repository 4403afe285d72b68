#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "ttt/optimize.hpp"
#include "ttt/parallel.hpp"
#include "ttt/srdcm.hpp"

namespace ttt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// -sum_r w_r log f(x_{r+1} | x_r) for one regime block; +inf when the
// block cannot be evaluated.
double weighted_negloglik(const NodeDiffSeries& series, const RdcmParams& p, const Eigen::VectorXd& weights,
                          const BridgeConfig& bridge) {
  try {
    GridMoments gm(p, series.times, bridge);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < weights.size(); ++r) {
      if (weights[r] == 0.0) continue;
      sum += weights[r] * gm.log_bridge_density(static_cast<std::size_t>(r + 1), series.values[r], series.values[r + 1]);
    }
    return std::isfinite(sum) ? -sum : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

RdcmParams maximize_block(const NodeDiffSeries& series, const RdcmParams& current, const Eigen::VectorXd& weights,
                          const ParamMask& mask, const EmConfig& config) {
  const BoxTransform transform(config.box);
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (!mask[k]) free.push_back(k);
  if (free.empty()) return current;

  const ParamVector base = to_vector(current);
  auto params_at = [&](const std::vector<double>& unit) {
    ParamVector v = base;
    for (std::size_t j = 0; j < free.size(); ++j) v[free[j]] = transform.from_unit(free[j], unit[j]);
    return with_vector(current, v);
  };
  std::vector<double> start(free.size());
  for (std::size_t j = 0; j < free.size(); ++j) start[j] = transform.to_unit(free[j], base[free[j]]);

  opt::NelderMeadOptions nm;
  nm.max_evals = config.m_step_max_evals;
  nm.rel_tol = config.m_step_rel_tol;
  nm.initial_step = 0.02;
  auto objective = [&](const std::vector<double>& unit) {
    return weighted_negloglik(series, params_at(unit), weights, config.filter.bridge);
  };
  auto result = opt::minimize_box(objective, start, std::vector<double>(free.size(), 0.0),
                                  std::vector<double>(free.size(), 1.0), nm);
  // the start may have been clamped into the box; never accept a worse block
  const double at_current = weighted_negloglik(series, current, weights, config.filter.bridge);
  return result.value < at_current ? params_at(result.x) : current;
}

FilterState e_step(const NodeDiffSeries& series, const SrdcmParams& params, const FilterOptions& options) {
  return forward_backward(emission_matrix(series, regime_moments(series, params, options.bridge)), params, options);
}

}  // namespace

EmResult em_fit(const NodeDiffSeries& series, const SrdcmParams& init, const EmConfig& config) {
  validate_series(series);
  validate_srdcm(init, /*allow_zero_transitions=*/true);
  const std::size_t m = init.regime_count();
  std::vector<ParamMask> masks = config.fixed_masks;
  if (masks.empty())
    for (const auto& r : init.regimes) masks.push_back(default_fixed_mask(series, r));
  if (masks.size() != m) throw Error(ErrorKind::Config, "one fixed mask per regime required");

  FilterOptions options = config.filter;
  options.allow_zero_transitions = true;  // EM may drive probabilities to exact zero

  EmResult res;
  res.params = init;
  res.filter = e_step(series, res.params, options);
  res.log_marginals.push_back(res.filter.log_marginal);
  std::vector<bool> collapsed(m, false);

  for (res.iterations = 0; res.iterations < config.max_iter;) {
    const FilterState& fs = res.filter;
    SrdcmParams next = res.params;

    Eigen::VectorXd pi0 = fs.gamma.row(0).transpose();
    next.pi0 = pi0 / pi0.sum();
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (const auto& xi : fs.xi) counts += xi;
    for (Eigen::Index h = 0; h < counts.rows(); ++h) {
      double row = counts.row(h).sum();
      if (row > 0) next.trans_P.row(h) = counts.row(h) / row;
    }

    parallel_for(m, config.threads, [&](std::size_t j) {
      Eigen::VectorXd weights = fs.gamma.col(static_cast<Eigen::Index>(j));
      if (weights.sum() < config.collapse_eps) return;
      next.regimes[j] = maximize_block(series, res.params.regimes[j], weights, masks[j], config);
    });
    for (std::size_t j = 0; j < m; ++j)
      if (!collapsed[j] && fs.gamma.col(static_cast<Eigen::Index>(j)).sum() < config.collapse_eps) {
        collapsed[j] = true;
        res.warnings.push_back("regime " + std::to_string(j + 1) +
                               " collapsed (posterior mass below threshold); its parameters are frozen");
      }

    FilterState updated = e_step(series, next, options);
    const double before = res.log_marginals.back();
    const double after = updated.log_marginal;
    if (after < before - config.ascent_tol)
      throw Error(ErrorKind::InternalContract, "EM log-marginal decreased from " + std::to_string(before) + " to " +
                                                   std::to_string(after));
    res.params = std::move(next);
    res.filter = std::move(updated);
    res.log_marginals.push_back(after);
    ++res.iterations;
    if (after - before <= config.tol * std::abs(before)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

SrdcmParams initial_srdcm(const NodeDiffSeries& series, const std::vector<RdcmParams>& frames, double delta_bar,
                          int rolling_window) {
  validate_series(series);
  if (frames.empty()) throw Error(ErrorKind::Config, "at least one regime frame required");
  if (series.size() < 3) throw Error(ErrorKind::SampleSize, "initialization needs at least three observations");
  const std::size_t m = frames.size();
  const std::size_t n = series.size() - 1;

  std::vector<double> d(n);
  for (std::size_t r = 0; r < n; ++r) d[r] = series.values[r + 1] - series.values[r];
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    s1[r + 1] = s1[r] + d[r];
    s2[r + 1] = s2[r] + d[r] * d[r];
  }
  const std::size_t half = static_cast<std::size_t>(std::max(1, rolling_window / 2));
  std::vector<double> feature(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t lo = r >= half ? r - half : 0, hi = std::min(n, r + half + 1);
    double cnt = static_cast<double>(hi - lo);
    double mean = (s1[hi] - s1[lo]) / cnt;
    double var = std::max((s2[hi] - s2[lo]) / cnt - mean * mean, 0.0);
    feature[r] = std::log(var + 1e-300);
  }

  // Lloyd iterations in one dimension, centers seeded at quantiles
  std::vector<double> sorted = feature;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> centers(m);
  for (std::size_t j = 0; j < m; ++j)
    centers[j] = sorted[std::min(n - 1, static_cast<std::size_t>((j + 0.5) / static_cast<double>(m) * n))];
  std::vector<std::size_t> label(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < m; ++j)
        if (std::abs(feature[r] - centers[j]) < std::abs(feature[r] - centers[best])) best = j;
      changed |= best != label[r];
      label[r] = best;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t r = 0; r < n; ++r)
        if (label[r] == j) sum += feature[r], ++cnt;
      if (cnt > 0) centers[j] = sum / static_cast<double>(cnt);
    }
    if (!changed && iter > 0) break;
  }
  std::vector<std::size_t> cluster_rank(m);
  std::iota(cluster_rank.begin(), cluster_rank.end(), 0);
  std::stable_sort(cluster_rank.begin(), cluster_rank.end(),
                   [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
  std::vector<std::size_t> frame_rank(m);
  std::iota(frame_rank.begin(), frame_rank.end(), 0);
  std::stable_sort(frame_rank.begin(), frame_rank.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].theta_minus < frames[b].theta_minus; });

  SrdcmParams p;
  p.delta_bar = delta_bar;
  p.regimes = frames;
  const ParamBox box;
  for (std::size_t q = 0; q < m; ++q) {
    const std::size_t j = frame_rank[q], c = cluster_rank[q];
    double sum = 0.0, sum2 = 0.0;
    std::size_t cnt = 0;
    for (std::size_t r = 0; r < n; ++r)
      if (label[r] == c) sum += d[r], sum2 += d[r] * d[r], ++cnt;
    RdcmParams& reg = p.regimes[j];
    if (cnt >= 2) {
      double mean = sum / static_cast<double>(cnt);
      double var = std::max(sum2 / static_cast<double>(cnt) - mean * mean, 1e-300);
      double step_factor = -std::expm1(-2.0 * reg.a * delta_bar) / (2.0 * reg.a);
      reg.theta_minus = std::clamp(std::sqrt(var / step_factor), box.lower[3], box.upper[3]);
    }
    if (default_fixed_mask(series, reg)[static_cast<std::size_t>(Param::BPlus)]) reg.b_plus = 1.0;
  }
  const auto mi = static_cast<Eigen::Index>(m);
  p.pi0 = Eigen::VectorXd::Constant(mi, 1.0 / static_cast<double>(m));
  if (m == 1) {
    p.trans_P = Eigen::MatrixXd::Ones(1, 1);
  } else {
    p.trans_P = Eigen::MatrixXd::Constant(mi, mi, 0.1 / static_cast<double>(m - 1));
    p.trans_P.diagonal().setConstant(0.9);
  }
  return p;
}

EmResult fit_srdcm(const NodeDiffSeries& series, const std::vector<RdcmParams>& frames, double delta_bar,
                   const SrdcmFitConfig& config) {
  const SrdcmParams base = initial_srdcm(series, frames, delta_bar, config.rolling_window);
  const std::size_t m = base.regime_count();

  std::vector<SrdcmParams> candidates{base};
  for (int r = 1; r <= config.restarts && m > 1; ++r) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> diag(0.7, 0.97);
    SrdcmParams c = base;
    for (std::size_t j = 0; j < m; ++j) {
      const RdcmParams& src = base.regimes[(j + static_cast<std::size_t>(r)) % m];
      c.regimes[j].theta_minus = std::clamp(src.theta_minus * std::exp(0.2 * normal(rng)), config.em.box.lower[3],
                                            config.em.box.upper[3]);
      c.regimes[j].a = std::clamp(c.regimes[j].a * std::exp(0.3 * normal(rng)), config.em.box.lower[0],
                                  config.em.box.upper[0]);
    }
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(m); ++h) {
      double stay = diag(rng);
      c.trans_P.row(h).setConstant((1.0 - stay) / static_cast<double>(m - 1));
      c.trans_P(h, h) = stay;
    }
    candidates.push_back(std::move(c));
  }

  EmResult best;
  if (candidates.size() == 1) {
    best = em_fit(series, base, config.em);
  } else {
    EmConfig short_config = config.em;
    short_config.max_iter = config.short_iterations;
    short_config.threads = 1;
    std::vector<std::optional<EmResult>> runs(candidates.size());
    std::vector<std::string> failures(candidates.size());
    parallel_for(candidates.size(), config.em.threads, [&](std::size_t c) {
      try {
        runs[c] = em_fit(series, candidates[c], short_config);
      } catch (const Error& e) {
        failures[c] = e.what();
      }
    });
    std::optional<std::size_t> winner;
    for (std::size_t c = 0; c < runs.size(); ++c)
      if (runs[c] && (!winner || runs[c]->log_marginals.back() > runs[*winner]->log_marginals.back())) winner = c;
    if (!winner) throw Error(ErrorKind::Fit, "every EM start failed: " + failures.front());
    best = em_fit(series, runs[*winner]->params, config.em);
    best.log_marginals.insert(best.log_marginals.begin(), runs[*winner]->log_marginals.begin(),
                              runs[*winner]->log_marginals.end() - 1);
    best.iterations += runs[*winner]->iterations;
    for (auto& w : runs[*winner]->warnings) best.warnings.push_back(w);
  }

  auto order = canonical_order(best.params);
  if (!std::is_sorted(order.begin(), order.end())) {
    FilterOptions options = config.em.filter;
    options.allow_zero_transitions = true;
    best.filter = forward_backward(series, best.params, options);
  }
  return best;
}

}  // namespace ttt
