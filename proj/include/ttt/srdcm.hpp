#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttt/market_data.hpp"
#include "ttt/rdcm.hpp"

namespace ttt {

// Switching model on the observation lattice: the hidden regime S_{i-1}
// selects which deadline-specific bridge generates the step (t_{i-1}, t_i].
// Regime indices are 0-based in this API and 1-based in files.
struct SrdcmParams {
  std::vector<RdcmParams> regimes;
  Eigen::VectorXd pi0;
  Eigen::MatrixXd trans_P;  // row-stochastic, p_hk = P(S_{i+1} = k | S_i = h)
  double delta_bar = 1.0 / 252.0;

  std::size_t regime_count() const { return regimes.size(); }
};

// Checks shapes, pi0 > 0 summing to 1 and P rows summing to 1 with positive
// entries. allow_zero_transitions admits zero probabilities (degenerate test
// chains, EM iterates).
void validate_srdcm(const SrdcmParams& params, bool allow_zero_transitions = false);

struct FilterOptions {
  BridgeConfig bridge;
  bool allow_zero_transitions = false;
};

// Rows are indexed by the regime variable: row r belongs to S_r, which
// governs (t_r, t_{r+1}]; a series of N observations gives N-1 rows.
struct FilterState {
  Eigen::MatrixXd log_emission;  // log f_j(x_{r+1} | x_r)
  Eigen::MatrixXd log_alpha;     // log alpha_{r+1}
  Eigen::MatrixXd log_beta;      // log beta_{r+1}
  Eigen::MatrixXd gamma;         // P(S_r = j | data)
  std::vector<Eigen::MatrixXd> xi;  // xi[r](h,k) = P(S_r = h, S_{r+1} = k | data), r = 0..N-3
  double log_marginal = 0.0;

  std::size_t rows() const { return static_cast<std::size_t>(gamma.rows()); }
};

// log-sum-exp of a range; -inf for an empty or all -inf range.
double log_sum_exp(std::span<const double> values);

// Regime bridge transition log-density over (t_prev, t], written in the
// telescoped form log f_{t|t_prev}(x) + log f_{T|t}(0) - log f_{T|t_prev}(0).
double regime_bridge_logdensity(double x_prev, double x, double t_prev, double t, const RdcmParams& regime,
                                const BridgeConfig& config = {});

// One GridMoments per regime over the series times.
std::vector<GridMoments> regime_moments(const NodeDiffSeries& series, const SrdcmParams& params,
                                        const BridgeConfig& config = {});

// (N-1) x m matrix of log f_j(x_{r+1} | x_r); NaN raises Error(Propagation).
Eigen::MatrixXd emission_matrix(const NodeDiffSeries& series, const std::vector<GridMoments>& moments);

FilterState forward_backward(const NodeDiffSeries& series, const SrdcmParams& params,
                             const FilterOptions& options = {});
FilterState forward_backward(const Eigen::MatrixXd& log_emission, const SrdcmParams& params,
                             const FilterOptions& options = {});

// Log-likelihood given the regime path (length N-1): the sum over
// constant-regime blocks of telescoped bridge blocks. Also evaluates the
// unsimplified per-step sum and throws Error(InternalContract) if the two
// disagree.
double path_conditional_loglik(const NodeDiffSeries& series, std::span<const int> regime_path,
                               const SrdcmParams& params, const BridgeConfig& config = {});
double path_conditional_loglik(const NodeDiffSeries& series, std::span<const int> regime_path,
                               const std::vector<GridMoments>& moments);

inline constexpr std::size_t kBruteForceMaxSteps = 12;

// log sum_s exp(loglik(s)) P(s) over all m^(N-1) regime paths.
double direct_loglik_bruteforce(const NodeDiffSeries& series, const SrdcmParams& params,
                                const FilterOptions& options = {});

struct DecodedPath {
  std::vector<int> regime_indices;  // 0-based
  std::vector<double> max_posteriors;
};

// Row-wise argmax of gamma; ties go to the lowest regime index.
DecodedPath local_decode(const FilterState& filter);

struct SrdcmSimulation {
  std::vector<double> times;  // t0 + i * delta_bar, i = 0..n_steps
  std::vector<double> path;
  std::vector<int> regime_path;  // S_0..S_{n_steps-1}
};

// X noise comes from the noise stream of `seed` and the chain from the chain
// stream, so a single-regime run reproduces simulate_path bit for bit.
SrdcmSimulation simulate_srdcm(const SrdcmParams& params, double x0, double t0, std::size_t n_steps,
                               std::uint64_t seed, const BridgeConfig& config = {});

// (x_i - k_i(j_i)) / sigma_i(j_i) under the decoded regime of each step.
std::vector<double> srdcm_residuals(const NodeDiffSeries& series, const SrdcmParams& params,
                                    const DecodedPath& decoded, const BridgeConfig& config = {});

// Sorts regimes by deadline (stable), permuting pi0 and P alongside. Returns
// the permutation: new index r holds old regime order[r].
std::vector<int> canonical_order(SrdcmParams& params);
SrdcmParams permute_regimes(const SrdcmParams& params, std::span<const int> order);

// ---- Baum-Welch ----

struct EmConfig {
  int max_iter = 200;
  double tol = 1e-8;             // relative log-marginal improvement
  double ascent_tol = 1e-9;      // allowed decrease before the M-step contract is declared breached
  double collapse_eps = 1e-6;    // sum of gamma below this freezes a regime
  int m_step_max_evals = 300;    // simplex evaluations per regime per M-step
  double m_step_rel_tol = 1e-10;
  ParamBox box;
  std::vector<ParamMask> fixed_masks;  // per regime; empty = default_fixed_mask per regime
  FilterOptions filter;
  int threads = 1;
};

struct EmResult {
  SrdcmParams params;
  FilterState filter;
  std::vector<double> log_marginals;  // one per E-step, starting at the initial parameters
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Generalized EM: exact updates for pi0 and P, warm-started bounded simplex
// for each regime's continuous block. The log-marginal never decreases.
EmResult em_fit(const NodeDiffSeries& series, const SrdcmParams& init, const EmConfig& config = {});

struct SrdcmFitConfig {
  int restarts = 4;          // extra starts besides the data-driven one
  int short_iterations = 15; // EM iterations per start before the best is continued
  int rolling_window = 20;
  std::uint64_t seed = 0;
  EmConfig em;
};

// Data-driven start: two-or-more-means split of the log rolling variance of
// the increments, clusters matched to the frames by their theta_minus rank.
SrdcmParams initial_srdcm(const NodeDiffSeries& series, const std::vector<RdcmParams>& frames, double delta_bar,
                          int rolling_window = 20);

EmResult fit_srdcm(const NodeDiffSeries& series, const std::vector<RdcmParams>& frames, double delta_bar,
                   const SrdcmFitConfig& config = {});

// Number of free continuous entries plus m(m-1) transition and m-1 initial
// probabilities.
int srdcm_parameter_count(const SrdcmParams& params, const std::vector<ParamMask>& fixed_masks);

}  // namespace ttt
