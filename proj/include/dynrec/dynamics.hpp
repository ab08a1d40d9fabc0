#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dynrec/basis.hpp"

namespace dynrec {

/// Coefficients of a quadratic vector field. Column j of `coeffs` holds the
/// coefficients of component j over the canonical column order, so the
/// matrix is num_columns(n) x n. Stored sparse: built-in systems have a
/// handful of terms per component even when n is in the thousands.
struct QuadraticModel {
  std::size_t n = 0;
  Eigen::SparseMatrix<double> coeffs;
  Basis basis = Basis::monomial;
  /// Unit-box frame when set; original coordinates otherwise.
  std::optional<AffineTransform> frame;

  /// Number of nonzero coefficients of component j.
  std::size_t sparsity(std::size_t j) const;
  /// Dense copy of component j's coefficients.
  Eigen::VectorXd component(std::size_t j) const;
};

struct Lorenz96 {
  double forcing = 8.0;
};

struct Fisher {
  double gamma = 0.1;
};

struct SystemSpec {
  std::variant<Lorenz96, Fisher, QuadraticModel> kind;
  std::size_t n = 0;

  static SystemSpec lorenz96(std::size_t n, double forcing = 8.0) { return {Lorenz96{forcing}, n}; }
  static SystemSpec fisher(std::size_t n, double gamma) { return {Fisher{gamma}, n}; }
  static SystemSpec custom(QuadraticModel model);

  bool is_builtin() const { return !std::holds_alternative<QuadraticModel>(kind); }
  /// Throws InvalidSystem when n is outside what the system supports.
  void validate() const;
};

enum class VelocitySource { exact_observed, finite_difference, fine_step_fd };

std::string to_string(VelocitySource source);
VelocitySource velocity_source_from_string(const std::string& name);

/// One initialization's snapshot sequence, sampled at t0 + i*dt.
struct Burst {
  std::size_t index = 0;
  double t0 = 0.0;
  double dt = 0.0;
  /// m x n, one sample per row.
  Eigen::MatrixXd states;
  std::optional<Eigen::MatrixXd> velocities;
  VelocitySource velocity_source = VelocitySource::exact_observed;
  /// Richardson estimate (D(2h) - D(h)) / 3 of the central-difference error,
  /// present for fine-step velocities only.
  std::optional<Eigen::MatrixXd> velocity_error;

  std::size_t samples() const { return static_cast<std::size_t>(states.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(states.cols()); }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
};

using Rhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd lorenz96_rhs(const Eigen::VectorXd& x, double forcing);
Eigen::VectorXd fisher_rhs(const Eigen::VectorXd& x, double gamma);

/// Ground-truth monomial model in original coordinates. A custom system
/// returns its embedded model unchanged.
QuadraticModel true_model(const SystemSpec& spec);

/// Evaluates a monomial, original-frame model at x.
Eigen::VectorXd quadratic_rhs(const QuadraticModel& model, const Eigen::VectorXd& x);

/// Right-hand side callable for any system spec.
Rhs system_rhs(const SystemSpec& spec);

struct Rk45Options {
  double tol = 1e-9;
  double min_step = 1e-14;
  long max_steps = 50'000'000;
};

/// Dormand-Prince 5(4) with PI step control. Returns an m x n matrix of
/// states at t0 + i*dt_out; steps are clipped so every output time is hit by
/// an actual integrator step rather than interpolated.
Eigen::MatrixXd integrate_rk45(const Rhs& rhs, const Eigen::VectorXd& x0, double t0, double dt_out,
                               std::size_t m, const Rk45Options& options = {});

struct UniformBox {
  double lo = -1.0;
  double hi = 1.0;
};

struct BurstOptions {
  std::size_t bursts = 1;
  std::size_t samples = 5;
  double dt = 1e-3;
  UniformBox init;
  VelocitySource velocity_source = VelocitySource::finite_difference;
  /// Spacing of the auxiliary grid for fine_step_fd; 0 means dt / 100.
  double dt_fine = 0.0;
  double tol = 1e-9;
  std::uint64_t seed = 0;
};

/// K bursts from i.i.d. uniform initializations. Burst k draws from its own
/// stream derived from (seed, k). finite_difference bursts carry no
/// velocities; they are filled in by the differentiation stage.
std::vector<Burst> generate_bursts(const SystemSpec& spec, const BurstOptions& options);

}  // namespace dynrec
