#include "ttt/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ttt/errors.hpp"

namespace ttt {

void validate_generator(const Eigen::MatrixXd& Q, bool strict) {
  if (Q.rows() != Q.cols() || Q.rows() < 1) throw Error(ErrorKind::Domain, "generator must be square");
  for (Eigen::Index h = 0; h < Q.rows(); ++h) {
    double row = 0.0, scale = 0.0;
    for (Eigen::Index k = 0; k < Q.cols(); ++k) {
      if (!std::isfinite(Q(h, k))) throw Error(ErrorKind::Domain, "generator entries must be finite");
      if (h != k && !(strict ? Q(h, k) > 0 : Q(h, k) >= 0))
        throw Error(ErrorKind::Domain, "generator off-diagonal rates must be positive");
      row += Q(h, k);
      scale += std::abs(Q(h, k));
    }
    if (std::abs(row) > 1e-12 * std::max(1.0, scale)) throw Error(ErrorKind::Domain, "generator rows must sum to 0");
  }
}

Eigen::MatrixXd expm_scaling_squaring(const Eigen::MatrixXd& A) {
  const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd B = A / std::ldexp(1.0, squarings);
  // ||B|| <= 1/2: 20 terms leave a remainder below 0.5^21 / 21!
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = term * B / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

Eigen::MatrixXd transition_matrix(const Eigen::MatrixXd& Q, double dt) {
  validate_generator(Q, /*strict=*/false);
  if (Q.rows() != 2) return expm_scaling_squaring(Q * dt);
  // e^A = e^s [cosh(q) I + sinh(q)/q (A - s I)], s = tr(A)/2, q^2 = s^2 - det(A)
  const Eigen::Matrix2d A = Q * dt;
  const double s = 0.5 * A.trace();
  const Eigen::Matrix2d shifted = A - s * Eigen::Matrix2d::Identity();
  const double q2 = -shifted.determinant();
  double c, sinc;
  if (q2 >= 0) {
    const double q = std::sqrt(q2);
    c = std::cosh(q);
    sinc = q < 1e-8 ? 1.0 + q2 / 6.0 : std::sinh(q) / q;
  } else {
    const double q = std::sqrt(-q2);
    c = std::cos(q);
    sinc = q < 1e-8 ? 1.0 - (-q2) / 6.0 : std::sin(q) / q;
  }
  Eigen::MatrixXd out = std::exp(s) * (c * Eigen::Matrix2d::Identity() + sinc * shifted);
  return out;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q) {
  validate_generator(Q, /*strict=*/false);
  const Eigen::Index m = Q.rows();
  Eigen::MatrixXd system(m + 1, m);
  system.topRows(m) = Q.transpose();
  system.row(m).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs[m] = 1.0;
  Eigen::VectorXd pi = system.colPivHouseholderQr().solve(rhs);
  for (Eigen::Index j = 0; j < m; ++j) pi[j] = std::max(pi[j], 0.0);
  return pi / pi.sum();
}

int sample_state(const Eigen::Ref<const Eigen::VectorXd>& probabilities, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (Eigen::Index j = 0; j < probabilities.size(); ++j) {
    if (probabilities[j] <= 0) continue;
    last_positive = static_cast<int>(j);
    cumulative += probabilities[j];
    if (u < cumulative) return static_cast<int>(j);
  }
  return last_positive;
}

int SwitchPath::regime_at(double t) const {
  auto it = std::upper_bound(switch_times.begin(), switch_times.end(), t);
  return labels[static_cast<std::size_t>(it - switch_times.begin())];
}

SwitchPath sample_ctmc(const Eigen::MatrixXd& Q, int initial_state, double t0, double l, Rng& rng) {
  validate_generator(Q, /*strict=*/false);
  if (!(l > t0)) throw Error(ErrorKind::Domain, "CTMC window must have l > t0");
  if (initial_state < 0 || initial_state >= Q.rows()) throw Error(ErrorKind::Range, "initial state out of range");
  SwitchPath path;
  path.t0 = t0;
  path.l = l;
  int state = initial_state;
  path.labels.push_back(state);
  double t = t0;
  for (;;) {
    const double rate = -Q(state, state);
    if (!(rate > 0)) break;  // absorbing
    std::exponential_distribution<double> holding(rate);
    t += holding(rng);
    if (t >= l) break;
    Eigen::VectorXd jump = Q.row(state).transpose() / rate;
    jump[state] = 0.0;
    state = sample_state(jump, rng);
    path.switch_times.push_back(t);
    path.labels.push_back(state);
  }
  return path;
}

std::vector<int> left_endpoint_labels(const SwitchPath& path, std::span<const double> grid) {
  std::vector<int> out;
  if (grid.size() < 2) return out;
  out.reserve(grid.size() - 1);
  for (std::size_t i = 1; i < grid.size(); ++i) out.push_back(path.regime_at(grid[i - 1]));
  return out;
}

std::size_t switch_cell_count(const SwitchPath& path, std::span<const double> grid) {
  std::size_t cells = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    auto lo = std::lower_bound(path.switch_times.begin(), path.switch_times.end(), grid[i - 1]);
    if (lo != path.switch_times.end() && *lo < grid[i]) ++cells;
  }
  return cells;
}

double left_endpoint_mismatch(const SwitchPath& path, std::span<const double> grid) {
  double measure = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double a = grid[i - 1], b = grid[i];
    const int left = path.regime_at(a);
    // walk the segments overlapping [a, b)
    auto it = std::upper_bound(path.switch_times.begin(), path.switch_times.end(), a);
    double cursor = a;
    int label = left;
    std::size_t seg = static_cast<std::size_t>(it - path.switch_times.begin());
    while (cursor < b) {
      double end = std::min(b, path.segment_end(seg));
      if (label != left) measure += end - cursor;
      cursor = end;
      ++seg;
      if (seg >= path.labels.size()) break;
      label = path.labels[seg];
    }
  }
  return measure;
}

double min_switch_gap(const SwitchPath& path) {
  if (path.switch_times.empty()) return std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < path.labels.size(); ++r) gap = std::min(gap, path.segment_end(r) - path.segment_start(r));
  return gap;
}

}  // namespace ttt
