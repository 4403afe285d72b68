#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttt/market_data.hpp"
#include "ttt/markov.hpp"
#include "ttt/rdcm.hpp"

namespace ttt {

// Diffusion block (theta_minus, theta_plus); the drift block stays fixed
// under infill asymptotics on a bounded horizon.
struct Theta {
  double minus = 0.1;
  double plus = 1.0;
};

RdcmParams with_theta(RdcmParams frame, Theta theta);
inline Theta theta_of(const RdcmParams& p) { return {p.theta_minus, p.theta_plus}; }

// Equally spaced observations t_i = t0 + i (l - t0)/n on a fixed horizon.
struct InfillGrid {
  double t0 = 0.0;
  double l = 1.0;
  std::size_t n = 1;

  double delta_n() const { return (l - t0) / static_cast<double>(n); }
  std::vector<double> times() const;  // n + 1 points, the last one exactly l
  // Throws Error(Range) unless t0 < l <= T - delta_guard.
  void validate(const RdcmParams& frame, const BridgeConfig& config = {}) const;
};

// M_n split into the endpoint term R_n / n and the data-dependent remainder
//   -(1/2n) sum log(v_i / Delta_n) - (1/2n) sum (x_i - m_i)^2 / v_i.
struct ContrastParts {
  double endpoint = 0.0;
  double data = 0.0;
  double total() const { return endpoint + data; }
};

// Delta_n is taken as (t_n - t_0) / n from the moment grid.
ContrastParts contrast_parts(std::span<const double> values, const GridMoments& moments);
double contrast_mn(const NodeDiffSeries& series, Theta theta, const RdcmParams& frame, const BridgeConfig& config = {});

// int_from^to [log g^2(T-u; theta) + g^2(T-u; theta0) / g^2(T-u; theta)] du,
// closed form before tau, graded Gauss-Legendre after.
double psi_integral(Theta theta, Theta theta0, const RdcmParams& frame, double from, double to);

// M_inf(theta) = -psi_integral(t0, l) / (2 (l - t0)). Throws Error(Range) on a
// gap violation and Error(NumericDegeneracy) when g^2 drops below the floor.
double limit_contrast(Theta theta, Theta theta0, double t0, double l, const RdcmParams& frame,
                      const BridgeConfig& config = {});

// ---- switching ----

// Per-step rescaled log-density of regime j over (t_{i-1}, t_i]:
//   R~_i - 1/2 log(v_i / Delta_n) - 1/2 (x_i - m_i)^2 / v_i,
//   R~_i = log f_{T_j|t_i}(0 | x_i) - log f_{T_j|t_{i-1}}(0 | x_{i-1}).
double rescaled_step_logdensity(std::span<const double> values, const GridMoments& moments, std::size_t i,
                                double delta_n);

// (1/n) sum_i log f~ under the left-endpoint regime labels[i-1] (one label
// per step, 0-based).
double switching_conditional_contrast(std::span<const double> values, std::span<const int> labels,
                                      const std::vector<GridMoments>& moments);
double switching_conditional_contrast(const NodeDiffSeries& series, const SwitchPath& path,
                                      std::span<const Theta> thetas, std::span<const RdcmParams> frames,
                                      const BridgeConfig& config = {});

// M_inf(theta | s) = -1/(2(l - t0)) sum_r psi_j_r over the segments of s.
double switching_limit_contrast(std::span<const Theta> thetas, std::span<const Theta> theta0,
                                const SwitchPath& path, std::span<const RdcmParams> frames);

// Monte Carlo observed contrast (1/n) log( (1/K) sum_k exp(n M_n(theta | s_k)) )
// over K sampled regime paths.
double observed_switching_contrast(std::span<const double> values, const std::vector<GridMoments>& moments,
                                   const std::vector<std::vector<int>>& path_labels);

// ---- consistency experiments ----

struct ThetaBox {
  Theta lower{0.05, 0.1};
  Theta upper{1.0, 4.0};
};

struct ContrastReport {
  std::size_t n = 0;
  std::size_t rep = 0;
  std::vector<Theta> theta_grid;     // filled when values are kept
  std::vector<double> mn_values;     // M_n on theta_grid
  std::vector<double> limit_values;  // M_inf on theta_grid
  std::vector<Theta> argmax_mn;      // per regime, on the grid
  std::vector<Theta> argmax_limit;
  std::vector<Theta> estimate;       // refined maximizer per regime (NaN for unvisited regimes)
  double sup_gap = 0.0;              // NaN when not evaluated
  bool optimizer_converged = true;
};

struct InfillRecord {
  std::size_t n = 0;
  std::size_t rep = 0;
  std::string component;
  double estimate = 0.0;
  double truth = 0.0;
  double abs_error = 0.0;
  double sup_gap = 0.0;
  bool visible = true;
};

struct ComponentSummary {
  std::size_t n = 0;
  std::string component;
  bool visible = true;
  std::size_t count = 0;  // replications with a finite estimate
  double median_abs_error = 0.0;
  double sd_estimate = 0.0;
  double iqr_estimate = 0.0;
  double median_sup_gap = 0.0;
};

struct InfillReport {
  std::string model;  // "rdcm" or "switching"
  std::string mode;   // "conditional" or "marginal" for switching
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  std::vector<ContrastReport> contrasts;  // keyed by (n, rep)
  std::vector<InfillRecord> records;      // (n, rep, component) order
  std::vector<ComponentSummary> summary;  // (n, component) order
  std::size_t optimizer_failures = 0;
  // Largest theta_plus range of the data-dependent contrast at fixed
  // theta_minus, over regimes whose window ends before their tau.
  double data_flatness_max = 0.0;
  // Largest n * (theta_plus range of the full contrast) over the same cases.
  double endpoint_variation_max_scaled = 0.0;
  std::size_t switch_cell_checks = 0;  // replications where the one-switch-per-cell hypothesis held
};

struct RdcmInfillConfig {
  RdcmParams truth;                      // carries theta0
  std::optional<RdcmParams> fit_frame;   // drift block used by the contrast; defaults to the truth
  double x0 = 0.1;
  double t0 = 0.0;
  double l = 1.0;
  std::vector<std::size_t> n_list{250, 500, 1000, 2000, 4000};
  std::size_t n_reps = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  ThetaBox box;
  int grid_points = 41;
  bool keep_values = false;
  BridgeConfig bridge;
};

InfillReport rdcm_consistency_experiment(const RdcmInfillConfig& config);

enum class SwitchingMode { Marginal, Conditional };

struct SwitchingInfillConfig {
  std::vector<RdcmParams> truth;                        // one frame per regime, carrying theta0_j
  std::optional<std::vector<RdcmParams>> fit_frames;    // drift blocks used by the contrast
  Eigen::MatrixXd Q;                                    // CTMC generator
  double x0 = 0.05;
  double t0 = 0.0;
  double l = 1.5;
  std::vector<std::size_t> n_list{250, 500, 1000, 2000, 4000};
  std::size_t n_reps = 100;
  std::size_t n_paths = 256;
  SwitchingMode mode = SwitchingMode::Marginal;
  std::uint64_t seed = 0;
  int threads = 1;
  ThetaBox box;
  int grid_points = 41;
  int marginal_start_points = 5;  // per coordinate, coarse start grid in marginal mode
  BridgeConfig bridge;
};

// The chain starts from its stationary law and is independent of the noise.
InfillReport switching_consistency_experiment(const SwitchingInfillConfig& config);

// Recomputes report.summary from report.records.
std::vector<ComponentSummary> summarize_records(const std::vector<InfillRecord>& records);

// Tidy CSV: n,rep,component,abs_error,sup_gap.
void write_infill_csv(const InfillReport& report, const std::string& path);
std::string infill_csv(const InfillReport& report);

}  // namespace ttt
