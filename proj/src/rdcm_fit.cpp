#include <algorithm>
#include <cmath>
#include <limits>

#include "ttt/optimize.hpp"
#include "ttt/parallel.hpp"
#include "ttt/rdcm.hpp"

namespace ttt {

BoxTransform::BoxTransform(const ParamBox& b) : box(b) {
  for (std::size_t k = 0; k < kParamCount; ++k) {
    if (!(box.lower[k] <= box.upper[k])) throw Error(ErrorKind::Config, "box lower bound exceeds upper bound");
    log_scale[k] = box.lower[k] > 0 && box.upper[k] / box.lower[k] >= 50.0;
  }
}

double BoxTransform::to_unit(std::size_t k, double value) const {
  const double lo = box.lower[k], hi = box.upper[k];
  if (hi == lo) return 0.0;
  double u = log_scale[k] ? std::log(value / lo) / std::log(hi / lo) : (value - lo) / (hi - lo);
  return std::clamp(u, 0.0, 1.0);
}

double BoxTransform::from_unit(std::size_t k, double unit) const {
  const double lo = box.lower[k], hi = box.upper[k];
  unit = std::clamp(unit, 0.0, 1.0);
  double v = log_scale[k] ? lo * std::exp(unit * std::log(hi / lo)) : lo + unit * (hi - lo);
  return std::clamp(v, lo, hi);
}

int RdcmFit::free_parameters() const {
  return static_cast<int>(std::count(fixed_mask.begin(), fixed_mask.end(), false));
}

ParamMask default_fixed_mask(const NodeDiffSeries& series, const RdcmParams& frame) {
  ParamMask mask{};
  if (!series.times.empty() && series.times.back() < frame.tau) mask[static_cast<std::size_t>(Param::BPlus)] = true;
  return mask;
}

RdcmFit fit_rdcm(const NodeDiffSeries& series, const RdcmParams& frame_in, const ParamBox& box,
                 std::optional<ParamMask> fixed_mask, const OptimizerConfig& config, const BridgeConfig& bridge) {
  validate_series(series);
  if (series.size() < 2) throw Error(ErrorKind::SampleSize, "fit_rdcm needs at least two observations");
  RdcmParams frame = frame_in;
  ParamMask mask;
  if (fixed_mask) {
    mask = *fixed_mask;
  } else {
    mask = default_fixed_mask(series, frame);
    if (mask[static_cast<std::size_t>(Param::BPlus)]) frame.b_plus = 1.0;
  }
  validate_params(frame);

  const BoxTransform transform(box);
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (!mask[k]) free.push_back(k);

  auto params_at = [&](const std::vector<double>& unit) {
    ParamVector v = to_vector(frame);
    for (std::size_t j = 0; j < free.size(); ++j) v[free[j]] = transform.from_unit(free[j], unit[j]);
    return with_vector(frame, v);
  };
  auto objective = [&](const std::vector<double>& unit) {
    try {
      return -bridge_loglik(series, params_at(unit), bridge);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Rng rng = make_stream(config.seed, 0);
  const std::size_t start_count = static_cast<std::size_t>(std::max(1, config.starts));
  auto starts = opt::latin_hypercube(start_count, free.size(), rng);
  if (config.warm_start)
    for (std::size_t j = 0; j < free.size(); ++j)
      starts[0][j] = transform.to_unit(free[j], to_vector(frame)[free[j]]);

  const std::vector<double> lower(free.size(), 0.0), upper(free.size(), 1.0);
  opt::NelderMeadOptions nm;
  nm.max_iter = config.max_iter;
  nm.rel_tol = config.rel_tol;

  std::vector<opt::NelderMeadResult> results(starts.size());
  parallel_for(starts.size(), config.threads,
               [&](std::size_t s) { results[s] = opt::minimize_box(objective, starts[s], lower, upper, nm); });

  auto any_converged = [&] {
    return std::any_of(results.begin(), results.end(),
                       [](const auto& r) { return r.converged && std::isfinite(r.value); });
  };
  for (int extra = 0; extra < config.max_restarts && !any_converged(); ++extra) {
    auto point = opt::latin_hypercube(1, free.size(), rng).front();
    starts.push_back(point);
    results.push_back(opt::minimize_box(objective, point, lower, upper, nm));
  }

  RdcmFit fit;
  fit.fixed_mask = mask;
  std::size_t best = 0;
  for (std::size_t s = 0; s < results.size(); ++s) {
    StartTrace trace;
    trace.start = to_vector(params_at(starts[s]));
    trace.end = to_vector(params_at(results[s].x));
    trace.loglik = -results[s].value;
    trace.iterations = results[s].iterations;
    trace.evaluations = results[s].evaluations;
    trace.converged = results[s].converged;
    fit.report.traces.push_back(trace);
    fit.report.evaluations += results[s].evaluations;
    if (results[s].value < results[best].value) best = s;
  }
  fit.params = params_at(results[best].x);
  fit.loglik = -results[best].value;
  fit.report.iterations = results[best].iterations;
  fit.report.converged = results[best].converged;
  fit.aic = 2.0 * fit.free_parameters() - 2.0 * fit.loglik;
  for (std::size_t j = 0; j < free.size(); ++j) {
    double u = results[best].x[j];
    fit.on_boundary[free[j]] = u <= 1e-6 || u >= 1.0 - 1e-6;
    if (fit.on_boundary[free[j]])
      fit.warnings.push_back(std::string(param_name(free[j])) + " estimated on the box boundary");
  }
  if (!mask[static_cast<std::size_t>(Param::BPlus)] && series.times.back() < frame.tau)
    fit.warnings.push_back(
        "weak identification: every observation precedes tau, so b_plus and theta_plus enter only through the "
        "endpoint terms and are not jointly identified; fix b_plus (e.g. b_plus = 1)");

  if (!std::isfinite(fit.loglik)) throw FitError("no start produced a finite likelihood", fit);
  if (!any_converged()) throw FitError("optimizer did not converge after all restarts", fit);
  if (!fit.report.converged) {
    // the best point came from a start that hit the iteration cap; keep it but say so
    fit.warnings.push_back("best start stopped at the iteration cap");
  }
  return fit;
}

}  // namespace ttt
