#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttt/errors.hpp"
#include "ttt/market_data.hpp"
#include "ttt/rng.hpp"

namespace ttt {

// One regime of the deadline-constrained mean-reverting model
//   dX = a [phi(T - t) - X] dt + g(T - t) dW,   X_T = 0,
// with phi, g constant before tau and decaying as powers of the time to the
// deadline afterwards. Times are year fractions from the series epoch.
struct RdcmParams {
  double a = 1.0;
  double b_minus = 0.0;
  double b_plus = 1.0;
  double theta_minus = 0.1;
  double theta_plus = 1.0;
  double tau = 0.0;
  double deadline_T = 1.0;
};

// Continuous parameter vector order used by boxes, masks and optimizers.
enum class Param : std::size_t { A = 0, BMinus, BPlus, ThetaMinus, ThetaPlus };
inline constexpr std::size_t kParamCount = 5;
using ParamVector = std::array<double, kParamCount>;
using ParamMask = std::array<bool, kParamCount>;

std::string_view param_name(std::size_t index);
ParamVector to_vector(const RdcmParams& p);
RdcmParams with_vector(RdcmParams frame, const ParamVector& v);

// Throws Error(Domain) unless a, b_plus, theta_minus, theta_plus > 0,
// 0 <= tau < deadline_T and everything is finite.
void validate_params(const RdcmParams& p);

struct ParamBox {
  ParamVector lower{0.01, -1.0, 0.05, 1e-4, 0.05};
  ParamVector upper{100.0, 1.0, 5.0, 2.0, 5.0};

  bool contains(const RdcmParams& p) const;
};

struct BridgeConfig {
  double delta_guard = 1.0 / 3650.0;  // bridge evaluations need T - t >= delta_guard
  double variance_floor = 1e-18;      // one-step and terminal variances
};

// Level function: b_minus * min{1, max(u / (T - tau), 0)^b_plus}, u = T - t.
double phi(double time_to_deadline, double b_minus, double b_plus, double tau, double deadline_T);
// Volatility: same shape with (theta_minus, theta_plus).
double g_vol(double time_to_deadline, double theta_minus, double theta_plus, double tau, double deadline_T);

// a * int_{t0}^{t} e^{-a(t-s)} phi(T-s) ds
double drift_integral(double t0, double t, const RdcmParams& p);
// int_{t0}^{t} e^{-2a(t-s)} g(T-s)^2 ds
double variance_integral(double t0, double t, const RdcmParams& p);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

// Law of X_t given X_{t0} = x0 without the terminal pin.
Moments uncond_moments(double x0, double t0, double t, const RdcmParams& p);

// Law of X_t given X_{t0} = x0 and X_T = 0.
struct BridgeLaw {
  double mean_k = 0.0;
  double variance_sigma2 = 0.0;
  double ratio_R = 0.0;
  double uncond_mean_m = 0.0;
  double uncond_var_v = 0.0;
};

// Direct evaluation: every moment is integrated from t0. The variance is
// returned in the factorized form v * R and checked against the subtraction
// form v - e^{-2a(T-t)} v^2 / v_T (Error(InternalContract) on disagreement
// beyond what the conditioning of the subtraction allows).
BridgeLaw bridge_law(double x0, double t0, double t, const RdcmParams& p, const BridgeConfig& config = {});

struct BridgeVarianceRoutes {
  double subtraction = 0.0;  // v_t - e^{-2a(T-t)} v_t^2 / v_T, v_T integrated over [t0, T]
  double factorized = 0.0;   // v_t * v_{T|t} / (e^{-2a(T-t)} v_t + v_{T|t})
  double v_t = 0.0;
  double v_T = 0.0;          // v_{T|t0}
  double v_T_given_t = 0.0;  // v_{T|t}
  double decay_sq = 0.0;     // e^{-2a(T-t)}
};
BridgeVarianceRoutes bridge_variance_routes(double t0, double t, const RdcmParams& p);

// Per-grid batch of one-step and to-deadline moments for a fixed parameter
// block. Step quantities cover (t_{i-1}, t_i], node quantities [t_i, T]; the
// node values are obtained by a backward recursion seeded at the last node,
// so each coefficient integral is evaluated once per step. The recursion and
// the deadline seed are carried in long double: the terminal density at x can
// be far out in its tail, where a 1e-16 relative error in the node drift moves
// the log-density by more than the telescoped likelihood can absorb.
class GridMoments {
 public:
  // With allow_terminal, the last time may equal the deadline (simulation);
  // otherwise every time must keep the delta_guard gap.
  GridMoments(const RdcmParams& p, std::span<const double> times, const BridgeConfig& config = {},
              bool allow_terminal = false);

  std::size_t nodes() const { return times_.size(); }
  const RdcmParams& params() const { return params_; }
  double time(std::size_t i) const { return times_[i]; }

  // Step i = 1..nodes()-1.
  double step_decay(std::size_t i) const { return decay_[i]; }
  double step_drift(std::size_t i) const { return drift_[i]; }
  double step_variance(std::size_t i) const { return var_[i]; }
  double step_mean(std::size_t i, double x_prev) const { return decay_[i] * x_prev + drift_[i]; }

  // Node i = 0..nodes()-1.
  double terminal_decay(std::size_t i) const { return static_cast<double>(term_decay_[i]); }
  double terminal_drift(std::size_t i) const { return static_cast<double>(term_drift_[i]); }
  double terminal_variance(std::size_t i) const { return static_cast<double>(term_var_[i]); }

  // log f_{T|t_i}(0 | x)
  double log_terminal_density(std::size_t i, double x) const;
  // log f_{T|t_j}(0 | x_j) - log f_{T|t_i}(0 | x_i), differenced before rounding
  double log_terminal_ratio(std::size_t i, double x_i, std::size_t j, double x_j) const;
  // Unrounded forms for telescoped sums, whose terms can reach 1e7 in
  // magnitude near the deadline while the sum stays O(n).
  long double log_terminal_extended(std::size_t i, double x) const;
  long double log_transition_extended(std::size_t i, double x_prev, double x) const;
  // log f_{t_i|t_{i-1}}(x | x_prev), no pin
  double log_transition_density(std::size_t i, double x_prev, double x) const;

  struct StepLaw {
    double mean_k;
    double variance_sigma2;
  };
  StepLaw step_bridge_law(std::size_t i, double x_prev) const;
  double log_bridge_density(std::size_t i, double x_prev, double x) const;

 private:
  RdcmParams params_;
  BridgeConfig config_;
  std::vector<double> times_;
  std::vector<double> decay_, drift_, var_;
  std::vector<long double> decay_ext_;
  std::vector<long double> term_decay_, term_drift_, term_var_;
};

double log_normal_density(double x, double mean, double variance);

// Sequential bridge sampling on `grid` (grid[0] is the start time). Uses the
// noise stream of `seed`; a grid point at the deadline gets exactly 0.
std::vector<double> simulate_path(const RdcmParams& p, double x0, std::span<const double> grid, std::uint64_t seed,
                                  const BridgeConfig& config = {});
std::vector<double> simulate_path(const GridMoments& moments, double x0, Rng& rng);

// Telescoped bridge log-likelihood conditional on the first observation:
//   log f_{T|t_n}(0) - log f_{T|t_0}(0) + sum_i log f_{t_i|t_{i-1}}(x_i).
double bridge_loglik(const NodeDiffSeries& series, const RdcmParams& p, const BridgeConfig& config = {});
double bridge_loglik(std::span<const double> times, std::span<const double> values, const GridMoments& moments);

// (x_i - k_i) / sigma_i from the one-step bridge law, i = 1..n-1.
std::vector<double> rdcm_residuals(const NodeDiffSeries& series, const RdcmParams& p, const BridgeConfig& config = {});

// ---- fitting ----

struct OptimizerConfig {
  int starts = 8;             // Latin-hypercube starts over the box
  int max_restarts = 4;       // extra random starts when none converged
  int max_iter = 2000;
  double rel_tol = 1e-10;
  bool warm_start = false;    // first start at the frame values
  std::uint64_t seed = 0;
  int threads = 1;
};

struct StartTrace {
  ParamVector start{};
  ParamVector end{};
  double loglik = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

struct OptimizerReport {
  int iterations = 0;  // of the winning start
  int evaluations = 0; // over all starts
  bool converged = false;
  std::vector<StartTrace> traces;
};

struct RdcmFit {
  RdcmParams params;
  double loglik = 0.0;
  double aic = 0.0;
  ParamMask fixed_mask{};
  ParamMask on_boundary{};
  OptimizerReport report;
  std::vector<std::string> warnings;

  int free_parameters() const;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, RdcmFit best) : Error(ErrorKind::Fit, what), best_(std::move(best)) {}
  const RdcmFit& best() const { return best_; }

 private:
  RdcmFit best_;
};

// Holds b_plus at 1 when every observation precedes tau, where the post-tau
// shape enters the likelihood only through the endpoint terms.
ParamMask default_fixed_mask(const NodeDiffSeries& series, const RdcmParams& frame);

// Maximizes bridge_loglik over the free entries of the box. `frame` supplies
// tau, T and the values of fixed entries (b_plus is reset to 1 when the
// default mask pins it). Starts run in parallel and results are reduced in
// start order.
RdcmFit fit_rdcm(const NodeDiffSeries& series, const RdcmParams& frame, const ParamBox& box = {},
                 std::optional<ParamMask> fixed_mask = std::nullopt, const OptimizerConfig& config = {},
                 const BridgeConfig& bridge = {});

// Unit-cube coordinates for the optimizer: log scale for positive entries
// whose box spans at least a factor 50, linear otherwise.
struct BoxTransform {
  ParamBox box;
  ParamMask log_scale{};

  explicit BoxTransform(const ParamBox& b);
  double to_unit(std::size_t k, double value) const;
  double from_unit(std::size_t k, double unit) const;
};

}  // namespace ttt
