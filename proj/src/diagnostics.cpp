#include "ttt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ttt/errors.hpp"
#include "ttt/parallel.hpp"
#include "ttt/rng.hpp"

namespace ttt {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0)) return 1.0;
  if (lambda < 0.3) {
    // 1 - sqrt(2 pi)/lambda sum exp(-(2j-1)^2 pi^2 / (8 lambda^2))
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
      const double term = std::exp(-(2.0 * j - 1.0) * (2.0 * j - 1.0) * c);
      sum += term;
      if (term == 0.0) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term == 0.0) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_normal(std::span<const double> z) {
  if (z.size() < 2) throw Error(ErrorKind::SampleSize, "KS test needs at least 2 samples");
  std::vector<double> sorted(z.begin(), z.end());
  for (double v : sorted)
    if (!std::isfinite(v)) throw Error(ErrorKind::Domain, "KS test samples must be finite");
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = standard_normal_cdf(sorted[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  KsResult out;
  out.statistic_D = std::clamp(d, 0.0, 1.0);
  out.n = sorted.size();
  out.p_value = kolmogorov_survival(std::sqrt(n) * out.statistic_D);
  return out;
}

double aic(double loglik, int k_params) {
  if (k_params < 1) throw Error(ErrorKind::Domain, "AIC needs k >= 1");
  return 2.0 * k_params - 2.0 * loglik;
}

BootstrapReport parametric_bootstrap(const std::vector<std::string>& names, const BootstrapReplication& replicate,
                                     std::size_t n_reps, std::uint64_t seed, int threads) {
  if (n_reps < 1) throw Error(ErrorKind::Config, "bootstrap needs n_reps >= 1");
  std::vector<std::optional<std::vector<double>>> results(n_reps);
  parallel_for(n_reps, threads, [&](std::size_t r) {
    try {
      results[r] = replicate(stream_seed(seed, r));
    } catch (const Error&) {
      results[r].reset();
    }
    if (results[r] && results[r]->size() != names.size())
      throw Error(ErrorKind::InternalContract, "bootstrap replication returned the wrong parameter count");
  });

  BootstrapReport report;
  report.n_replications = n_reps;
  report.seed = seed;
  std::vector<std::vector<double>> columns(names.size());
  for (const auto& r : results) {
    if (!r) {
      ++report.failures;
      continue;
    }
    ++report.n_used;
    for (std::size_t k = 0; k < names.size(); ++k) columns[k].push_back((*r)[k]);
  }
  if (report.n_used == 0) throw Error(ErrorKind::BootstrapFailure, "every bootstrap replication failed");
  report.single_replication = report.n_used == 1;
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto& col = columns[k];
    std::sort(col.begin(), col.end());
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
    report.parameters.push_back({names[k], mean, sd});
  }
  return report;
}

BootstrapReport bootstrap_rdcm(const RdcmFit& fit, std::span<const double> grid, double x0, std::size_t n_reps,
                               std::uint64_t seed, const RdcmBootstrapConfig& config, int threads) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < kParamCount; ++k) names.emplace_back(param_name(k));
  const std::vector<double> times(grid.begin(), grid.end());
  auto replicate = [&](std::uint64_t rep_seed) -> std::optional<std::vector<double>> {
    NodeDiffSeries series;
    series.times = times;
    series.values = simulate_path(fit.params, x0, times, rep_seed, config.bridge);
    OptimizerConfig opt = config.optimizer;
    opt.warm_start = true;
    opt.seed = stream_seed(rep_seed, kChainStream);
    opt.threads = 1;
    try {
      RdcmFit refit = fit_rdcm(series, fit.params, config.box, fit.fixed_mask, opt, config.bridge);
      if (!refit.report.converged) return std::nullopt;
      const ParamVector v = to_vector(refit.params);
      return std::vector<double>(v.begin(), v.end());
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  return parametric_bootstrap(names, replicate, n_reps, seed, threads);
}

std::vector<std::string> srdcm_parameter_names(std::size_t regimes) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < regimes; ++j)
    for (std::size_t k = 0; k < kParamCount; ++k) names.push_back(std::string(param_name(k)) + "_" + std::to_string(j + 1));
  for (std::size_t h = 0; h < regimes; ++h)
    for (std::size_t k = 0; k < regimes; ++k) names.push_back("p_" + std::to_string(h + 1) + std::to_string(k + 1));
  return names;
}

std::vector<double> srdcm_parameter_values(const SrdcmParams& params) {
  std::vector<double> values;
  for (const auto& regime : params.regimes) {
    const ParamVector v = to_vector(regime);
    values.insert(values.end(), v.begin(), v.end());
  }
  for (Eigen::Index h = 0; h < params.trans_P.rows(); ++h)
    for (Eigen::Index k = 0; k < params.trans_P.cols(); ++k) values.push_back(params.trans_P(h, k));
  return values;
}

BootstrapReport bootstrap_srdcm(const SrdcmParams& fitted, double x0, double t0, std::size_t n_steps,
                                std::size_t n_reps, std::uint64_t seed, const EmConfig& em, int threads) {
  const auto names = srdcm_parameter_names(fitted.regime_count());
  auto replicate = [&](std::uint64_t rep_seed) -> std::optional<std::vector<double>> {
    SrdcmSimulation sim = simulate_srdcm(fitted, x0, t0, n_steps, rep_seed, em.filter.bridge);
    NodeDiffSeries series;
    series.times = sim.times;
    series.values = sim.path;
    EmConfig config = em;
    config.threads = 1;
    try {
      EmResult refit = em_fit(series, fitted, config);
      if (!refit.converged) return std::nullopt;
      return srdcm_parameter_values(refit.params);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  return parametric_bootstrap(names, replicate, n_reps, seed, threads);
}

}  // namespace ttt
