#include "dynrec/differentiation.hpp"

#include <random>

#include "dynrec/errors.hpp"
#include "dynrec/random.hpp"

namespace dynrec {

Eigen::MatrixXd fd_velocity(const Eigen::MatrixXd& states, double dt) {
  const auto m = states.rows();
  if (m < 3) throw InsufficientSamples("finite differencing needs at least 3 samples");
  if (!(dt > 0.0)) throw InvalidArgument("sample spacing must be positive");
  Eigen::MatrixXd v(m, states.cols());
  v.row(0) = (states.row(1) - states.row(0)) / dt;
  v.row(m - 1) = (states.row(m - 1) - states.row(m - 2)) / dt;
  for (Eigen::Index i = 1; i + 1 < m; ++i) v.row(i) = (states.row(i + 1) - states.row(i - 1)) / (2.0 * dt);
  return v;
}

void differentiate_bursts(std::span<Burst> bursts) {
  for (auto& b : bursts) {
    b.velocities = fd_velocity(b.states, b.dt);
    b.velocity_source = VelocitySource::finite_difference;
  }
}

Eigen::MatrixXd add_state_noise(const Eigen::MatrixXd& states, const NoiseSpec& spec) {
  if (spec.ratio < 0.0) throw InvalidArgument("noise ratio must be non-negative");
  if (spec.ratio == 0.0) return states;
  const double norm = states.norm();
  if (norm == 0.0) throw InvalidArgument("cannot scale noise relative to an all-zero state matrix");

  auto engine = make_stream(spec.seed, {0x6e6f697365ULL});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd eta(states.rows(), states.cols());
  for (Eigen::Index j = 0; j < eta.cols(); ++j) {
    for (Eigen::Index i = 0; i < eta.rows(); ++i) eta(i, j) = normal(engine);
  }
  eta *= (spec.ratio / 100.0) * norm / eta.norm();
  return states + eta;
}

void add_state_noise(std::span<Burst> bursts, const NoiseSpec& spec) {
  if (bursts.empty() || spec.ratio == 0.0) {
    if (spec.ratio < 0.0) throw InvalidArgument("noise ratio must be non-negative");
    return;
  }
  const auto m = bursts.front().states.rows();
  const auto n = bursts.front().states.cols();
  Eigen::MatrixXd stacked(m * static_cast<Eigen::Index>(bursts.size()), n);
  for (std::size_t k = 0; k < bursts.size(); ++k) {
    if (bursts[k].states.rows() != m || bursts[k].states.cols() != n) throw ShapeError("bursts differ in shape");
    stacked.middleRows(static_cast<Eigen::Index>(k) * m, m) = bursts[k].states;
  }
  const Eigen::MatrixXd noisy = add_state_noise(stacked, spec);
  for (std::size_t k = 0; k < bursts.size(); ++k) {
    bursts[k].states = noisy.middleRows(static_cast<Eigen::Index>(k) * m, m);
  }
}

double noise_ratio(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) throw ShapeError("matrices differ in shape");
  const double norm = clean.norm();
  if (norm == 0.0) throw InvalidArgument("noise ratio undefined for an all-zero state matrix");
  return 100.0 * (clean - noisy).norm() / norm;
}

double relative_l2_error(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& truth) {
  if (coeffs.size() != truth.size()) throw ShapeError("coefficient vectors differ in length");
  const double norm = truth.norm();
  if (norm == 0.0) throw InvalidArgument("relative error undefined for a zero reference vector");
  return 100.0 * (coeffs - truth).norm() / norm;
}

}  // namespace dynrec
