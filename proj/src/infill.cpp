#include "ttt/infill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "ttt/errors.hpp"
#include "ttt/optimize.hpp"
#include "ttt/parallel.hpp"
#include "ttt/quadrature.hpp"
#include "ttt/rng.hpp"

namespace ttt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kPathStream = 2;

std::uint64_t replication_seed(std::uint64_t master, std::size_t n, std::size_t rep) {
  return stream_seed(stream_seed(master, n), rep);
}

struct GridAxes {
  std::vector<double> minus, plus;
  std::size_t size() const { return minus.size() * plus.size(); }
  Theta at(std::size_t k) const { return {minus[k / plus.size()], plus[k % plus.size()]}; }
};

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) out[k] = points == 1 ? lo : lo + (hi - lo) * k / (points - 1);
  return out;
}

GridAxes make_axes(const ThetaBox& box, int points) {
  if (points < 2) throw Error(ErrorKind::Config, "theta grid needs at least 2 points per coordinate");
  if (!(box.lower.minus > 0 && box.upper.minus > box.lower.minus && box.lower.plus > 0 &&
        box.upper.plus > box.lower.plus))
    throw Error(ErrorKind::Config, "theta box must be positive and non-empty");
  return {linspace(box.lower.minus, box.upper.minus, points), linspace(box.lower.plus, box.upper.plus, points)};
}

void check_n_list(const std::vector<std::size_t>& n_list, std::size_t n_reps) {
  if (n_list.empty() || n_reps == 0) throw Error(ErrorKind::Config, "n_list and n_reps must be non-empty");
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    if (n_list[k] < 2) throw Error(ErrorKind::Config, "each n must be at least 2");
    if (k > 0 && n_list[k] <= n_list[k - 1]) throw Error(ErrorKind::Config, "n_list must be strictly increasing");
  }
}

RdcmParams fit_frame_for(const RdcmParams& truth, const std::optional<RdcmParams>& fit) {
  RdcmParams frame = fit ? *fit : truth;
  frame.tau = truth.tau;
  frame.deadline_T = truth.deadline_T;
  return frame;
}

// Maximizes a contrast over the theta box from `start`; returns the better of
// the simplex result and the start.
struct Refined {
  Theta theta;
  double value;
  bool converged;
};

Refined refine_theta(const std::function<double(Theta)>& contrast, Theta start, double start_value,
                     const ThetaBox& box, int grid_points) {
  auto objective = [&](const std::vector<double>& x) {
    try {
      double v = contrast({x[0], x[1]});
      return std::isfinite(v) ? -v : kInf;
    } catch (const Error&) {
      return kInf;
    }
  };
  opt::NelderMeadOptions options;
  options.max_iter = 1000;
  options.rel_tol = 1e-12;
  options.initial_step = 1.0 / (grid_points - 1);
  auto result = opt::minimize_box(objective, {start.minus, start.plus}, {box.lower.minus, box.lower.plus},
                                  {box.upper.minus, box.upper.plus}, options);
  if (!(result.value < -start_value)) return {start, start_value, result.converged};
  return {{result.x[0], result.x[1]}, -result.value, result.converged};
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return kNaN;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double sample_sd_sorted(const std::vector<double>& sorted) {
  if (sorted.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(sorted.size() - 1));
}

std::vector<double> finite_sorted(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  std::sort(v.begin(), v.end());
  return v;
}

// Maximal runs of equal labels over steps 1..n: (first step, last step, label).
struct Block {
  std::size_t first, last;
  int label;
};

std::vector<Block> label_blocks(std::span<const int> labels) {
  std::vector<Block> blocks;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    int j = labels[i - 1];
    if (blocks.empty() || blocks.back().label != j)
      blocks.push_back({i, i, j});
    else
      blocks.back().last = i;
  }
  return blocks;
}

// prefix[i] = sum_{s <= i} log f~_j(s), prefix[0] = 0.
std::vector<double> rescaled_prefix(std::span<const double> values, const GridMoments& moments, double delta_n) {
  std::vector<double> prefix(values.size(), 0.0);
  for (std::size_t i = 1; i < values.size(); ++i)
    prefix[i] = prefix[i - 1] + rescaled_step_logdensity(values, moments, i, delta_n);
  return prefix;
}

double observed_from_blocks(const std::vector<std::vector<double>>& prefix,
                            const std::vector<std::vector<Block>>& paths, std::size_t n) {
  std::vector<double> sums(paths.size());
  for (std::size_t k = 0; k < paths.size(); ++k) {
    double s = 0.0;
    for (const auto& b : paths[k]) s += prefix[b.label][b.last] - prefix[b.label][b.first - 1];
    sums[k] = s;
  }
  double top = -kInf;
  for (double s : sums) top = std::max(top, s);
  if (!std::isfinite(top)) return top / static_cast<double>(n);
  double acc = 0.0;
  for (double s : sums) acc += std::exp(s - top);
  return (top + std::log(acc) - std::log(static_cast<double>(paths.size()))) / static_cast<double>(n);
}

std::string component_name(std::size_t regime, std::size_t regimes, bool plus) {
  std::string base = regimes == 1 ? "theta" : "theta" + std::to_string(regime + 1);
  return base + (plus ? "_plus" : "_minus");
}

void push_records(InfillReport& report, const ContrastReport& cr, std::span<const Theta> theta0,
                  const std::vector<bool>& plus_visible) {
  const std::size_t m = theta0.size();
  for (std::size_t j = 0; j < m; ++j) {
    for (bool plus : {false, true}) {
      InfillRecord rec;
      rec.n = cr.n;
      rec.rep = cr.rep;
      rec.component = component_name(j, m, plus);
      rec.estimate = plus ? cr.estimate[j].plus : cr.estimate[j].minus;
      rec.truth = plus ? theta0[j].plus : theta0[j].minus;
      rec.abs_error = std::abs(rec.estimate - rec.truth);
      rec.sup_gap = cr.sup_gap;
      rec.visible = plus ? plus_visible[j] : true;
      report.records.push_back(std::move(rec));
    }
  }
}

// theta_plus range at fixed theta_minus, maximized over the theta_minus rows.
double plus_range(const GridAxes& axes, const std::function<double(std::size_t)>& value) {
  double worst = 0.0;
  const std::size_t np = axes.plus.size();
  for (std::size_t r = 0; r < axes.minus.size(); ++r) {
    double lo = kInf, hi = -kInf;
    for (std::size_t c = 0; c < np; ++c) {
      double v = value(r * np + c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

}  // namespace

RdcmParams with_theta(RdcmParams frame, Theta theta) {
  frame.theta_minus = theta.minus;
  frame.theta_plus = theta.plus;
  return frame;
}

std::vector<double> InfillGrid::times() const {
  std::vector<double> out(n + 1);
  const double d = delta_n();
  for (std::size_t i = 0; i <= n; ++i) out[i] = t0 + static_cast<double>(i) * d;
  out[n] = l;
  return out;
}

void InfillGrid::validate(const RdcmParams& frame, const BridgeConfig& config) const {
  if (n < 1) throw Error(ErrorKind::Domain, "infill grid needs n >= 1");
  if (!(l > t0)) throw Error(ErrorKind::Domain, "infill grid needs l > t0");
  if (frame.deadline_T - l < config.delta_guard * (1.0 - 1e-9))
    throw Error(ErrorKind::Range, "infill horizon violates the deadline gap l <= T - delta");
}

ContrastParts contrast_parts(std::span<const double> values, const GridMoments& moments) {
  const std::size_t nodes = moments.nodes();
  if (values.size() != nodes) throw Error(ErrorKind::Alignment, "contrast: series and grid sizes differ");
  if (nodes < 2) throw Error(ErrorKind::EmptySeries, "contrast: need at least two observations");
  const std::size_t n = nodes - 1;
  const double nd = static_cast<double>(n);
  const double delta_n = (moments.time(n) - moments.time(0)) / nd;
  double log_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double v = moments.step_variance(i);
    const double e = values[i] - moments.step_mean(i, values[i - 1]);
    log_sum += std::log(v / delta_n);
    sq_sum += e * e / v;
  }
  ContrastParts parts;
  parts.endpoint = moments.log_terminal_ratio(0, values[0], n, values[n]) / nd;
  parts.data = -(log_sum + sq_sum) / (2.0 * nd);
  return parts;
}

double contrast_mn(const NodeDiffSeries& series, Theta theta, const RdcmParams& frame, const BridgeConfig& config) {
  validate_series(series);
  GridMoments moments(with_theta(frame, theta), series.times, config);
  return contrast_parts(series.values, moments).total();
}

double psi_integral(Theta theta, Theta theta0, const RdcmParams& frame, double from, double to) {
  if (!(to > from)) return 0.0;
  if (!(theta.minus > 0 && theta.plus > 0 && theta0.minus > 0 && theta0.plus > 0))
    throw Error(ErrorKind::Domain, "psi: theta entries must be positive");
  const double tau = frame.tau;
  const double span = frame.deadline_T - tau;
  const double log_th2 = 2.0 * std::log(theta.minus);
  const double ratio0 = (theta0.minus / theta.minus) * (theta0.minus / theta.minus);
  double total = 0.0;
  if (from < tau) total += (std::min(to, tau) - from) * (log_th2 + ratio0);
  if (to > tau) {
    const double gap = frame.deadline_T - to;
    if (!(gap > 0)) throw Error(ErrorKind::Range, "psi: integration reaches the deadline");
    const double width = to - std::max(from, tau);
    // w runs back from `to`; the log singularity sits at w = -gap
    auto integrand = [&](double w) {
      const double ly = std::log((gap + w) / span);
      return log_th2 + 2.0 * theta.plus * ly + ratio0 * std::exp(2.0 * (theta0.plus - theta.plus) * ly);
    };
    total += quad::integrate_graded(integrand, width, std::min(gap, width));
  }
  return total;
}

double limit_contrast(Theta theta, Theta theta0, double t0, double l, const RdcmParams& frame,
                      const BridgeConfig& config) {
  if (!(l > t0)) throw Error(ErrorKind::Domain, "limit contrast needs l > t0");
  if (frame.deadline_T - l < config.delta_guard * (1.0 - 1e-9))
    throw Error(ErrorKind::Range, "limit contrast horizon violates the deadline gap");
  for (Theta th : {theta, theta0}) {
    const double g = g_vol(frame.deadline_T - l, th.minus, th.plus, frame.tau, frame.deadline_T);
    if (!(g * g >= config.variance_floor)) throw Error(ErrorKind::NumericDegeneracy, "g^2 below the ellipticity floor");
  }
  return -psi_integral(theta, theta0, frame, t0, l) / (2.0 * (l - t0));
}

double rescaled_step_logdensity(std::span<const double> values, const GridMoments& moments, std::size_t i,
                                double delta_n) {
  const double endpoint = moments.log_terminal_ratio(i - 1, values[i - 1], i, values[i]);
  const double v = moments.step_variance(i);
  const double e = values[i] - moments.step_mean(i, values[i - 1]);
  return endpoint - 0.5 * std::log(v / delta_n) - 0.5 * e * e / v;
}

double switching_conditional_contrast(std::span<const double> values, std::span<const int> labels,
                                      const std::vector<GridMoments>& moments) {
  if (moments.empty()) throw Error(ErrorKind::Domain, "switching contrast needs at least one regime");
  if (values.size() < 2) throw Error(ErrorKind::EmptySeries, "switching contrast: need at least two observations");
  const std::size_t n = values.size() - 1;
  if (labels.size() != n) throw Error(ErrorKind::Alignment, "switching contrast: one label per step required");
  for (const auto& gm : moments)
    if (gm.nodes() != values.size()) throw Error(ErrorKind::Alignment, "switching contrast: grid size mismatch");
  const double delta_n = (moments[0].time(n) - moments[0].time(0)) / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const int j = labels[i - 1];
    if (j < 0 || static_cast<std::size_t>(j) >= moments.size()) throw Error(ErrorKind::Range, "regime label out of range");
    sum += rescaled_step_logdensity(values, moments[j], i, delta_n);
  }
  return sum / static_cast<double>(n);
}

double switching_conditional_contrast(const NodeDiffSeries& series, const SwitchPath& path,
                                      std::span<const Theta> thetas, std::span<const RdcmParams> frames,
                                      const BridgeConfig& config) {
  validate_series(series);
  if (thetas.size() != frames.size()) throw Error(ErrorKind::Domain, "one theta per frame required");
  std::vector<GridMoments> moments;
  for (std::size_t j = 0; j < frames.size(); ++j)
    moments.emplace_back(with_theta(frames[j], thetas[j]), series.times, config);
  auto labels = left_endpoint_labels(path, series.times);
  return switching_conditional_contrast(series.values, labels, moments);
}

double switching_limit_contrast(std::span<const Theta> thetas, std::span<const Theta> theta0,
                                const SwitchPath& path, std::span<const RdcmParams> frames) {
  if (thetas.size() != frames.size() || theta0.size() != frames.size())
    throw Error(ErrorKind::Domain, "one theta per frame required");
  if (!(path.l > path.t0)) throw Error(ErrorKind::Domain, "switch path window is empty");
  double total = 0.0;
  for (std::size_t r = 0; r < path.labels.size(); ++r) {
    const int j = path.labels[r];
    if (j < 0 || static_cast<std::size_t>(j) >= frames.size()) throw Error(ErrorKind::Range, "regime label out of range");
    total += psi_integral(thetas[j], theta0[j], frames[j], path.segment_start(r), path.segment_end(r));
  }
  return -total / (2.0 * (path.l - path.t0));
}

double observed_switching_contrast(std::span<const double> values, const std::vector<GridMoments>& moments,
                                   const std::vector<std::vector<int>>& path_labels) {
  if (path_labels.empty()) throw Error(ErrorKind::Domain, "observed contrast needs at least one sampled path");
  if (values.size() < 2) throw Error(ErrorKind::EmptySeries, "observed contrast: need at least two observations");
  const std::size_t n = values.size() - 1;
  const double delta_n = (moments.at(0).time(n) - moments.at(0).time(0)) / static_cast<double>(n);
  std::vector<std::vector<double>> prefix;
  for (const auto& gm : moments) prefix.push_back(rescaled_prefix(values, gm, delta_n));
  std::vector<std::vector<Block>> blocks;
  for (const auto& labels : path_labels) {
    if (labels.size() != n) throw Error(ErrorKind::Alignment, "observed contrast: one label per step required");
    for (int j : labels)
      if (j < 0 || static_cast<std::size_t>(j) >= moments.size()) throw Error(ErrorKind::Range, "regime label out of range");
    blocks.push_back(label_blocks(labels));
  }
  return observed_from_blocks(prefix, blocks, n);
}

// ---------------------------------------------------------------------------

InfillReport rdcm_consistency_experiment(const RdcmInfillConfig& config) {
  validate_params(config.truth);
  check_n_list(config.n_list, config.n_reps);
  const RdcmParams fit = fit_frame_for(config.truth, config.fit_frame);
  validate_params(fit);
  const GridAxes axes = make_axes(config.box, config.grid_points);
  const Theta theta0 = theta_of(config.truth);
  const bool plus_visible = config.l > config.truth.tau;
  const std::size_t reps = config.n_reps;
  const std::size_t grid_size = axes.size();

  std::vector<double> limit(grid_size);
  parallel_for(grid_size, config.threads, [&](std::size_t k) {
    limit[k] = limit_contrast(axes.at(k), theta0, config.t0, config.l, fit, config.bridge);
  });

  InfillReport report;
  report.model = "rdcm";
  report.seed = config.seed;

  for (std::size_t n : config.n_list) {
    InfillGrid grid{config.t0, config.l, n};
    grid.validate(config.truth, config.bridge);
    const std::vector<double> times = grid.times();
    const GridMoments truth_moments(config.truth, times, config.bridge);

    std::vector<std::vector<double>> paths(reps);
    parallel_for(reps, config.threads, [&](std::size_t rep) {
      Rng rng = make_stream(replication_seed(config.seed, n, rep), kNoiseStream);
      paths[rep] = simulate_path(truth_moments, config.x0, rng);
    });

    // table[k * reps + rep]
    std::vector<double> endpoint(grid_size * reps), data(grid_size * reps);
    parallel_for(grid_size, config.threads, [&](std::size_t k) {
      const GridMoments gm(with_theta(fit, axes.at(k)), times, config.bridge);
      for (std::size_t rep = 0; rep < reps; ++rep) {
        auto parts = contrast_parts(paths[rep], gm);
        endpoint[k * reps + rep] = parts.endpoint;
        data[k * reps + rep] = parts.data;
      }
    });

    std::vector<ContrastReport> block(reps);
    std::vector<double> flat(reps, 0.0), endpoint_var(reps, 0.0);
    parallel_for(reps, config.threads, [&](std::size_t rep) {
      auto total = [&](std::size_t k) { return endpoint[k * reps + rep] + data[k * reps + rep]; };
      std::size_t best = 0;
      double gap = 0.0;
      for (std::size_t k = 0; k < grid_size; ++k) {
        if (total(k) > total(best)) best = k;
        gap = std::max(gap, std::abs(total(k) - limit[k]));
      }
      std::size_t best_limit = static_cast<std::size_t>(std::max_element(limit.begin(), limit.end()) - limit.begin());
      if (!plus_visible) {
        flat[rep] = plus_range(axes, [&](std::size_t k) { return data[k * reps + rep]; });
        endpoint_var[rep] = static_cast<double>(n) * plus_range(axes, total);
      }
      const auto& path = paths[rep];
      auto contrast = [&](Theta th) {
        const GridMoments gm(with_theta(fit, th), times, config.bridge);
        return contrast_parts(path, gm).total();
      };
      Refined refined = refine_theta(contrast, axes.at(best), total(best), config.box, config.grid_points);

      ContrastReport& cr = block[rep];
      cr.n = n;
      cr.rep = rep;
      cr.argmax_mn = {axes.at(best)};
      cr.argmax_limit = {axes.at(best_limit)};
      cr.estimate = {refined.theta};
      cr.sup_gap = gap;
      cr.optimizer_converged = refined.converged;
      if (config.keep_values) {
        for (std::size_t k = 0; k < grid_size; ++k) {
          cr.theta_grid.push_back(axes.at(k));
          cr.mn_values.push_back(total(k));
        }
        cr.limit_values = limit;
      }
    });

    for (std::size_t rep = 0; rep < reps; ++rep) {
      report.data_flatness_max = std::max(report.data_flatness_max, flat[rep]);
      report.endpoint_variation_max_scaled = std::max(report.endpoint_variation_max_scaled, endpoint_var[rep]);
      if (!block[rep].optimizer_converged) ++report.optimizer_failures;
      push_records(report, block[rep], std::span<const Theta>(&theta0, 1), {plus_visible});
      report.contrasts.push_back(std::move(block[rep]));
    }
  }
  report.summary = summarize_records(report.records);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct SwitchingReplication {
  SwitchPath path;
  std::vector<int> labels;
  std::vector<double> values;
  std::vector<std::vector<Block>> sampled;  // marginal mode
  bool one_switch_per_cell = false;
};

}  // namespace

InfillReport switching_consistency_experiment(const SwitchingInfillConfig& config) {
  const std::size_t m = config.truth.size();
  if (m == 0) throw Error(ErrorKind::Config, "switching experiment needs at least one regime");
  if (config.Q.rows() != static_cast<Eigen::Index>(m)) throw Error(ErrorKind::Config, "generator size differs from the regime count");
  validate_generator(config.Q, /*strict=*/true);
  check_n_list(config.n_list, config.n_reps);
  if (config.mode == SwitchingMode::Marginal && config.n_paths == 0)
    throw Error(ErrorKind::Config, "marginal mode needs n_paths >= 1");
  if (config.fit_frames && config.fit_frames->size() != m) throw Error(ErrorKind::Config, "one fit frame per regime required");

  std::vector<RdcmParams> fit(m);
  std::vector<Theta> theta0(m);
  std::vector<bool> plus_visible(m);
  for (std::size_t j = 0; j < m; ++j) {
    validate_params(config.truth[j]);
    fit[j] = fit_frame_for(config.truth[j], config.fit_frames ? std::optional<RdcmParams>((*config.fit_frames)[j])
                                                               : std::nullopt);
    validate_params(fit[j]);
    theta0[j] = theta_of(config.truth[j]);
    plus_visible[j] = config.l > config.truth[j].tau;
  }
  const Eigen::VectorXd stationary = stationary_distribution(config.Q);
  const GridAxes axes = make_axes(config.box, config.grid_points);
  const std::size_t grid_size = axes.size();
  const std::size_t reps = config.n_reps;
  const bool conditional = config.mode == SwitchingMode::Conditional;

  InfillReport report;
  report.model = "switching";
  report.mode = conditional ? "conditional" : "marginal";
  report.seed = config.seed;
  report.n_paths = conditional ? 0 : config.n_paths;

  for (std::size_t n : config.n_list) {
    InfillGrid grid{config.t0, config.l, n};
    for (const auto& frame : config.truth) grid.validate(frame, config.bridge);
    const std::vector<double> times = grid.times();
    const double delta_n = grid.delta_n();
    std::vector<GridMoments> truth_moments;
    for (const auto& frame : config.truth) truth_moments.emplace_back(frame, times, config.bridge);

    std::vector<SwitchingReplication> sims(reps);
    parallel_for(reps, config.threads, [&](std::size_t rep) {
      const std::uint64_t seed = replication_seed(config.seed, n, rep);
      SwitchingReplication& sim = sims[rep];
      Rng chain = make_stream(seed, kChainStream);
      const int s0 = sample_state(stationary, chain);
      sim.path = sample_ctmc(config.Q, s0, config.t0, config.l, chain);
      sim.labels = left_endpoint_labels(sim.path, times);

      const std::size_t switches = sim.path.n_switches();
      const std::size_t cells = switch_cell_count(sim.path, times);
      if (cells > switches) throw Error(ErrorKind::InternalContract, "more switch cells than switches");
      sim.one_switch_per_cell = delta_n < min_switch_gap(sim.path);
      if (sim.one_switch_per_cell && cells != switches)
        throw Error(ErrorKind::InternalContract, "a grid cell holds two switches despite delta_n < min gap");
      const double mismatch = left_endpoint_mismatch(sim.path, times);
      if (mismatch > static_cast<double>(switches) * delta_n * (1.0 + 1e-9) + 1e-15)
        throw Error(ErrorKind::InternalContract, "left-endpoint mismatch exceeds N(s) * delta_n");

      Rng noise = make_stream(seed, kNoiseStream);
      std::normal_distribution<double> normal;
      sim.values.assign(n + 1, 0.0);
      sim.values[0] = config.x0;
      for (std::size_t i = 1; i <= n; ++i) {
        auto law = truth_moments[sim.labels[i - 1]].step_bridge_law(i, sim.values[i - 1]);
        sim.values[i] = law.mean_k + std::sqrt(law.variance_sigma2) * normal(noise);
      }

      if (!conditional) {
        Rng sampler = make_stream(seed, kPathStream);
        sim.sampled.reserve(config.n_paths);
        for (std::size_t k = 0; k < config.n_paths; ++k) {
          const int start = sample_state(stationary, sampler);
          SwitchPath drawn = sample_ctmc(config.Q, start, config.t0, config.l, sampler);
          sim.sampled.push_back(label_blocks(left_endpoint_labels(drawn, times)));
        }
      }
    });

    std::vector<ContrastReport> block(reps);
    std::vector<double> flat(reps, 0.0), endpoint_var(reps, 0.0);

    if (conditional) {
      // Per regime: full and data-only contrast sums over that regime's steps.
      std::vector<std::vector<double>> full(m, std::vector<double>(grid_size * reps));
      std::vector<std::vector<double>> data(m, std::vector<double>(grid_size * reps));
      parallel_for(m * grid_size, config.threads, [&](std::size_t task) {
        const std::size_t j = task / grid_size, k = task % grid_size;
        const GridMoments gm(with_theta(fit[j], axes.at(k)), times, config.bridge);
        for (std::size_t rep = 0; rep < reps; ++rep) {
          const auto& sim = sims[rep];
          double f = 0.0, d = 0.0;
          for (std::size_t i = 1; i <= n; ++i) {
            if (sim.labels[i - 1] != static_cast<int>(j)) continue;
            const double step = rescaled_step_logdensity(sim.values, gm, i, delta_n);
            const double endpoint = gm.log_terminal_ratio(i - 1, sim.values[i - 1], i, sim.values[i]);
            f += step;
            d += step - endpoint;
          }
          full[j][k * reps + rep] = f / static_cast<double>(n);
          data[j][k * reps + rep] = d / static_cast<double>(n);
        }
      });

      parallel_for(reps, config.threads, [&](std::size_t rep) {
        const auto& sim = sims[rep];
        ContrastReport& cr = block[rep];
        cr.n = n;
        cr.rep = rep;
        double gap_hi = 0.0, gap_lo = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          // limit contrast of regime j along the true path, per grid theta
          std::vector<double> lim(grid_size, 0.0);
          for (std::size_t k = 0; k < grid_size; ++k) {
            double total = 0.0;
            for (std::size_t r = 0; r < sim.path.labels.size(); ++r)
              if (sim.path.labels[r] == static_cast<int>(j))
                total += psi_integral(axes.at(k), theta0[j], fit[j], sim.path.segment_start(r), sim.path.segment_end(r));
            lim[k] = -total / (2.0 * (config.l - config.t0));
          }
          auto value = [&](std::size_t k) { return full[j][k * reps + rep]; };
          std::size_t best = 0, best_limit = 0;
          double diff_hi = -kInf, diff_lo = kInf;
          for (std::size_t k = 0; k < grid_size; ++k) {
            if (value(k) > value(best)) best = k;
            if (lim[k] > lim[best_limit]) best_limit = k;
            diff_hi = std::max(diff_hi, value(k) - lim[k]);
            diff_lo = std::min(diff_lo, value(k) - lim[k]);
          }
          gap_hi += diff_hi;
          gap_lo += diff_lo;
          cr.argmax_mn.push_back(axes.at(best));
          cr.argmax_limit.push_back(axes.at(best_limit));

          const bool visited = std::find(sim.labels.begin(), sim.labels.end(), static_cast<int>(j)) != sim.labels.end();
          if (!visited) {
            cr.estimate.push_back({kNaN, kNaN});
            continue;
          }
          if (!plus_visible[j]) {
            flat[rep] = std::max(flat[rep], plus_range(axes, [&](std::size_t k) { return data[j][k * reps + rep]; }));
            endpoint_var[rep] = std::max(endpoint_var[rep], static_cast<double>(n) * plus_range(axes, value));
          }
          auto contrast = [&](Theta th) {
            const GridMoments gm(with_theta(fit[j], th), times, config.bridge);
            double f = 0.0;
            for (std::size_t i = 1; i <= n; ++i)
              if (sim.labels[i - 1] == static_cast<int>(j)) f += rescaled_step_logdensity(sim.values, gm, i, delta_n);
            return f / static_cast<double>(n);
          };
          Refined refined = refine_theta(contrast, axes.at(best), value(best), config.box, config.grid_points);
          cr.estimate.push_back(refined.theta);
          cr.optimizer_converged = cr.optimizer_converged && refined.converged;
        }
        // the conditional contrast is separable, so the sup over the product
        // grid of |sum_j (M_n,j - M_inf,j)| is attained at a sum of extremes
        cr.sup_gap = std::max(std::abs(gap_hi), std::abs(gap_lo));
      });
    } else {
      const int coarse = std::max(2, config.marginal_start_points);
      const GridAxes start_axes = make_axes(config.box, coarse);
      const std::size_t start_size = start_axes.size();
      parallel_for(reps, config.threads, [&](std::size_t rep) {
        const auto& sim = sims[rep];
        // prefix sums of each regime at each coarse theta
        std::vector<std::vector<std::vector<double>>> coarse_prefix(m);
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t k = 0; k < start_size; ++k) {
            const GridMoments gm(with_theta(fit[j], start_axes.at(k)), times, config.bridge);
            coarse_prefix[j].push_back(rescaled_prefix(sim.values, gm, delta_n));
          }
        std::size_t combos = 1;
        for (std::size_t j = 0; j < m; ++j) combos *= start_size;
        std::size_t best_combo = 0;
        double best_value = -kInf;
        std::vector<std::vector<double>> prefix(m);
        for (std::size_t c = 0; c < combos; ++c) {
          std::size_t rest = c;
          for (std::size_t j = 0; j < m; ++j) {
            prefix[j] = coarse_prefix[j][rest % start_size];
            rest /= start_size;
          }
          const double v = observed_from_blocks(prefix, sim.sampled, n);
          if (v > best_value) {
            best_value = v;
            best_combo = c;
          }
        }
        std::vector<double> start, lower, upper;
        {
          std::size_t rest = best_combo;
          for (std::size_t j = 0; j < m; ++j) {
            const Theta th = start_axes.at(rest % start_size);
            rest /= start_size;
            start.insert(start.end(), {th.minus, th.plus});
            lower.insert(lower.end(), {config.box.lower.minus, config.box.lower.plus});
            upper.insert(upper.end(), {config.box.upper.minus, config.box.upper.plus});
          }
        }
        auto objective = [&](const std::vector<double>& x) {
          try {
            std::vector<std::vector<double>> pre(m);
            for (std::size_t j = 0; j < m; ++j) {
              const GridMoments gm(with_theta(fit[j], {x[2 * j], x[2 * j + 1]}), times, config.bridge);
              pre[j] = rescaled_prefix(sim.values, gm, delta_n);
            }
            const double v = observed_from_blocks(pre, sim.sampled, n);
            return std::isfinite(v) ? -v : kInf;
          } catch (const Error&) {
            return kInf;
          }
        };
        opt::NelderMeadOptions options;
        options.max_iter = 2000;
        options.rel_tol = 1e-12;
        options.initial_step = 1.0 / (coarse - 1) / 2.0;
        auto result = opt::minimize_box(objective, start, lower, upper, options);
        ContrastReport& cr = block[rep];
        cr.n = n;
        cr.rep = rep;
        cr.sup_gap = kNaN;
        cr.optimizer_converged = result.converged;
        for (std::size_t j = 0; j < m; ++j) {
          cr.estimate.push_back({result.x[2 * j], result.x[2 * j + 1]});
          cr.argmax_mn.push_back({start[2 * j], start[2 * j + 1]});
        }
      });
    }

    for (std::size_t rep = 0; rep < reps; ++rep) {
      report.data_flatness_max = std::max(report.data_flatness_max, flat[rep]);
      report.endpoint_variation_max_scaled = std::max(report.endpoint_variation_max_scaled, endpoint_var[rep]);
      if (!block[rep].optimizer_converged) ++report.optimizer_failures;
      if (sims[rep].one_switch_per_cell) ++report.switch_cell_checks;
      push_records(report, block[rep], theta0, plus_visible);
      report.contrasts.push_back(std::move(block[rep]));
    }
  }
  report.summary = summarize_records(report.records);
  return report;
}

std::vector<ComponentSummary> summarize_records(const std::vector<InfillRecord>& records) {
  // keep (n ascending, component in first-seen order)
  std::vector<std::string> component_order;
  for (const auto& r : records)
    if (std::find(component_order.begin(), component_order.end(), r.component) == component_order.end())
      component_order.push_back(r.component);
  struct Acc {
    bool visible = true;
    std::vector<double> errors, estimates, gaps;
  };
  std::map<std::pair<std::size_t, std::size_t>, Acc> groups;
  for (const auto& r : records) {
    const std::size_t c = static_cast<std::size_t>(
        std::find(component_order.begin(), component_order.end(), r.component) - component_order.begin());
    Acc& acc = groups[{r.n, c}];
    acc.visible = r.visible;
    acc.errors.push_back(r.abs_error);
    acc.estimates.push_back(r.estimate);
    acc.gaps.push_back(r.sup_gap);
  }
  std::vector<ComponentSummary> out;
  for (auto& [key, acc] : groups) {
    ComponentSummary s;
    s.n = key.first;
    s.component = component_order[key.second];
    s.visible = acc.visible;
    auto errors = finite_sorted(acc.errors);
    auto estimates = finite_sorted(acc.estimates);
    auto gaps = finite_sorted(acc.gaps);
    s.count = estimates.size();
    s.median_abs_error = quantile_sorted(errors, 0.5);
    s.sd_estimate = sample_sd_sorted(estimates);
    s.iqr_estimate = estimates.empty() ? kNaN : quantile_sorted(estimates, 0.75) - quantile_sorted(estimates, 0.25);
    s.median_sup_gap = quantile_sorted(gaps, 0.5);
    out.push_back(std::move(s));
  }
  return out;
}

std::string infill_csv(const InfillReport& report) {
  std::ostringstream os;
  os << "n,rep,component,abs_error,sup_gap\n";
  char buf[64];
  for (const auto& r : report.records) {
    os << r.n << ',' << r.rep << ',' << r.component << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.abs_error);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.sup_gap);
    os << buf << '\n';
  }
  return os.str();
}

void write_infill_csv(const InfillReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  out << infill_csv(report);
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

}  // namespace ttt
