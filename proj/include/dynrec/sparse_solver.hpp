#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace dynrec {

/// Parameters of the Pareto root-finding BPDN solver. `max_inner` caps the
/// projected-gradient iterations spent on one value of tau.
struct BpdnConfig {
  double sigma = 0.0;
  int max_outer = 40;
  int max_inner = 10'000;
  double tol_residual = 1e-6;
  double tol_gap = 1e-9;

  void validate() const;
};

/// argmin_{||w||_1 <= tau} ||w - v||_2.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double tau);

struct LassoResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  /// ||A^T r||_inf at the returned point.
  double dual_norm = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// min ||A c - b||_2 s.t. ||c||_1 <= tau by spectral projected gradient with
/// a non-monotone curvilinear line search. Stops on relative duality gap
/// <= cfg.tol_gap or after cfg.max_inner iterations.
LassoResult solve_lasso(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tau, const BpdnConfig& cfg,
                        const Eigen::VectorXd* warm_start = nullptr);

struct ParetoPoint {
  double tau = 0.0;
  double residual_norm = 0.0;
};

struct BpdnResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  double tau = 0.0;
  int newton_steps = 0;
  int iterations = 0;
  bool converged = false;
  /// (tau, ||r||) at every Newton update, in order.
  std::vector<ParetoPoint> pareto;
};

/// min ||c||_1 s.t. ||A c - b||_2 <= sigma via Newton's method on the Pareto
/// curve phi(tau) = ||A c_tau - b||_2 with phi'(tau) = -||A^T r||_inf / ||r||.
/// A root is accepted when ||r|| lies in
/// [sigma - max(tol_residual * sigma, 1e-10 ||b||), sigma (1 + tol_residual)],
/// which for sigma = 0 is the basis-pursuit limit ||r|| <= 1e-10 ||b||.
BpdnResult solve_bpdn(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const BpdnConfig& cfg);

/// Absolute residual floor used when sigma is zero or tiny.
double residual_floor(const Eigen::VectorXd& b);

/// Minimum-norm least-squares solution (complete orthogonal decomposition).
Eigen::VectorXd min_norm_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

/// Sequential thresholded least squares: alternate least squares on the active
/// columns and removal of coefficients below lambda, until the active set is
/// stable or max_iters passes. Inactive entries are exactly zero.
Eigen::VectorXd sequential_threshold_ls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double lambda,
                                        int max_iters = 10);

struct DebiasResult {
  Eigen::VectorXd coeffs;
  bool full_rank = true;
};

/// Ordinary least squares on an already column-restricted matrix. A
/// rank-deficient restriction falls back to the minimum-norm solution and is
/// flagged.
DebiasResult debias(const Eigen::MatrixXd& restricted, const Eigen::VectorXd& b);

/// {i : |c_i| > tau_supp * ||c||_inf}, ascending; empty for c = 0.
std::vector<std::size_t> support_of(const Eigen::VectorXd& coeffs, double tau_supp);

}  // namespace dynrec
