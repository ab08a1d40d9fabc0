#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dynrec/dynamics.hpp"

namespace dynrec {

/// Velocity estimate along a burst: forward difference on the first sample,
/// backward on the last, central in between. Needs m >= 3.
Eigen::MatrixXd fd_velocity(const Eigen::MatrixXd& states, double dt);

/// Fills every burst's velocities by fd_velocity and tags the source.
void differentiate_bursts(std::span<Burst> bursts);

struct NoiseSpec {
  /// Frobenius-norm noise ratio in percent.
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

/// Y = X + eta with eta i.i.d. standard Gaussian rescaled so that
/// noise_ratio(X, Y) equals spec.ratio.
Eigen::MatrixXd add_state_noise(const Eigen::MatrixXd& states, const NoiseSpec& spec);

/// Corrupts the states of all bursts jointly: the ratio applies to the
/// vertically stacked state matrix.
void add_state_noise(std::span<Burst> bursts, const NoiseSpec& spec);

/// 100 * ||X - Y||_F / ||X||_F.
double noise_ratio(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy);

/// 100 * ||c - c_true||_2 / ||c_true||_2.
double relative_l2_error(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& truth);

}  // namespace dynrec
