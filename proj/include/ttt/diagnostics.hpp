#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttt/rdcm.hpp"
#include "ttt/srdcm.hpp"

namespace ttt {

struct KsResult {
  double statistic_D = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

double standard_normal_cdf(double x);

// P(K > lambda) for the Kolmogorov distribution: the alternating series
// 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2), j <= 100, and the theta-dual
// series for lambda < 0.3 where the alternating one has not settled.
double kolmogorov_survival(double lambda);

// One-sample KS test against N(0,1), p-value at lambda = sqrt(n) D.
// Throws Error(SampleSize) for n < 2 and Error(Domain) for non-finite input.
KsResult ks_normal(std::span<const double> z);

// 2k - 2 loglik; throws Error(Domain) for k < 1.
double aic(double loglik, int k_params);

struct ParameterSpread {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct BootstrapReport {
  std::size_t n_replications = 0;  // requested
  std::size_t n_used = 0;          // converged refits
  std::size_t failures = 0;
  std::uint64_t seed = 0;
  bool single_replication = false;  // sd reported as 0 by convention
  std::vector<ParameterSpread> parameters;
};

// One replication: simulate from the fitted model with `replication_seed`
// and refit; nullopt marks a failed or non-converged refit.
using BootstrapReplication = std::function<std::optional<std::vector<double>>(std::uint64_t replication_seed)>;

// Replication r uses stream_seed(seed, r). Per-parameter moments are
// accumulated over sorted values, so the report does not depend on the order
// in which replications complete. Throws Error(BootstrapFailure) when every
// replication fails.
BootstrapReport parametric_bootstrap(const std::vector<std::string>& names, const BootstrapReplication& replicate,
                                     std::size_t n_reps, std::uint64_t seed, int threads = 1);

struct RdcmBootstrapConfig {
  ParamBox box;
  OptimizerConfig optimizer{.starts = 2, .max_restarts = 2};
  BridgeConfig bridge;
};

// Simulates on `grid` from x0 = the first grid value of the original series
// and refits with a warm start at the fitted parameters. Parameters follow
// the model order (a, b_minus, b_plus, theta_minus, theta_plus).
BootstrapReport bootstrap_rdcm(const RdcmFit& fit, std::span<const double> grid, double x0, std::size_t n_reps,
                               std::uint64_t seed, const RdcmBootstrapConfig& config = {}, int threads = 1);

// Simulates n_steps lattice steps and refits by EM from the fitted values.
// Parameters: a_j, b_minus_j, b_plus_j, theta_minus_j, theta_plus_j per
// regime (1-based), then p_hk.
BootstrapReport bootstrap_srdcm(const SrdcmParams& fitted, double x0, double t0, std::size_t n_steps,
                                std::size_t n_reps, std::uint64_t seed, const EmConfig& em = {}, int threads = 1);

std::vector<std::string> srdcm_parameter_names(std::size_t regimes);
std::vector<double> srdcm_parameter_values(const SrdcmParams& params);

}  // namespace ttt
