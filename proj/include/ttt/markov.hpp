#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttt/rng.hpp"

namespace ttt {

// Rows sum to zero, off-diagonal rates non-negative (strictly positive when
// `strict`). Throws Error(Domain).
void validate_generator(const Eigen::MatrixXd& Q, bool strict = true);

// e^{A} by scaling and squaring of a truncated Taylor series.
Eigen::MatrixXd expm_scaling_squaring(const Eigen::MatrixXd& A);

// e^{Q dt}: closed form from trace and determinant for 2x2, scaling and
// squaring otherwise.
Eigen::MatrixXd transition_matrix(const Eigen::MatrixXd& Q, double dt);

// pi Q = 0, sum pi = 1.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q);

int sample_state(const Eigen::Ref<const Eigen::VectorXd>& probabilities, Rng& rng);

// Cadlag regime path on [t0, l]: labels[r] holds on [kappa_r, kappa_{r+1})
// with kappa_0 = t0 and kappa_{N+1} = l.
struct SwitchPath {
  double t0 = 0.0;
  double l = 0.0;
  std::vector<double> switch_times;  // strictly increasing, inside (t0, l)
  std::vector<int> labels;           // switch_times.size() + 1 entries, consecutive ones differ

  std::size_t n_switches() const { return switch_times.size(); }
  int regime_at(double t) const;
  double segment_start(std::size_t r) const { return r == 0 ? t0 : switch_times[r - 1]; }
  double segment_end(std::size_t r) const { return r == switch_times.size() ? l : switch_times[r]; }
};

// Exact simulation with exponential holding times.
SwitchPath sample_ctmc(const Eigen::MatrixXd& Q, int initial_state, double t0, double l, Rng& rng);

// Left-endpoint labels s(t_{i-1}) for the steps (t_{i-1}, t_i], i = 1..n.
std::vector<int> left_endpoint_labels(const SwitchPath& path, std::span<const double> grid);

// Grid cells [t_{i-1}, t_i) containing at least one switch time.
std::size_t switch_cell_count(const SwitchPath& path, std::span<const double> grid);

// Lebesgue measure of {t in [t0, l) : s(t) != s(t_{i-1}) for the cell holding t}.
double left_endpoint_mismatch(const SwitchPath& path, std::span<const double> grid);

// Smallest gap between consecutive switch times (and the window ends); +inf
// without switches.
double min_switch_gap(const SwitchPath& path);

}  // namespace ttt
