#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynrec/basis.hpp"
#include "dynrec/dictionary.hpp"
#include "dynrec/differentiation.hpp"
#include "dynrec/dynamics.hpp"
#include "dynrec/sparse_solver.hpp"

namespace dynrec {

enum class Strategy { random_bursts, localized, single_trajectory };

std::string to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

/// How the BPDN residual bound is chosen per component.
///
/// Automatic: exact-observed velocities use 1e-8 ||v_j||. Finite-difference
/// velocities estimate the one-sided stencil error of each endpoint row as
/// |x[i+1] - 2 x[i] + x[i-1]| / (2 dt) on the neighbouring triple (interior
/// rows are second-order accurate and count as zero), take the l2 norm over
/// the rows in the dictionary and multiply by `safety`. Fine-step velocities
/// use `safety` times the Richardson estimate of their central-difference
/// error. All bounds are expressed in the dictionary frame.
struct SigmaPolicy {
  enum class Kind { automatic, fixed };
  Kind kind = Kind::automatic;
  double value = 0.0;
  double safety = 1.5;

  static SigmaPolicy fixed_value(double sigma) { return {Kind::fixed, sigma, 1.0}; }
};

/// Coordinates the dictionary is evaluated in. init_box maps the
/// initialization box onto [-1,1]^n; data_box divides every coordinate by the
/// largest observed |x|, a pure rescaling that keeps monomial supports intact
/// for long trajectories that leave the initialization box.
enum class FrameMode { original, init_box, data_box };

std::string to_string(FrameMode mode);
FrameMode frame_mode_from_string(const std::string& name);

struct RecoveryConfig {
  SystemSpec system = SystemSpec::lorenz96(50, 8.0);
  Strategy strategy = Strategy::random_bursts;
  std::size_t bursts = 100;
  std::size_t samples = 5;
  double dt = 1e-3;
  Basis basis = Basis::legendre;
  std::optional<std::size_t> ell;
  RowSelection rows = RowSelection::all_samples;
  VelocitySource velocity = VelocitySource::finite_difference;
  UniformBox init;
  FrameMode frame = FrameMode::init_box;
  double dt_fine = 0.0;
  double integrator_tol = 1e-9;
  SigmaPolicy sigma;
  double tau_supp = 1e-3;
  /// Success threshold on the relative l2 error, in percent.
  double rel_tol = 1.0;
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;
  double c_eff = 3.2;
  bool debias = true;
  BpdnConfig solver;
  /// Components to recover (zero-based); empty means all.
  std::vector<std::size_t> components;

  void validate() const;
  BurstOptions burst_options() const;
};

struct ComponentResult {
  std::size_t component = 0;
  /// Columns the coefficients below are expressed over.
  std::vector<Column> columns;
  /// BPDN solution in the dictionary basis and frame.
  Eigen::VectorXd solver_coeffs;
  /// Monomial coefficients in original coordinates before debiasing.
  Eigen::VectorXd pre_debias;
  /// Final monomial coefficients in original coordinates.
  Eigen::VectorXd coeffs;
  /// Positions into `columns` of support_of(coeffs, tau_supp).
  std::vector<std::size_t> support;
  double sigma = 0.0;
  std::optional<double> rel_l2;
  bool success = false;
  bool solver_converged = false;
  bool debias_full_rank = true;

  /// Coefficient of a column, zero when it is not among `columns`.
  double coefficient(const Column& column) const;
  double pre_debias_coefficient(const Column& column) const;
};

struct RecoveryResult {
  std::vector<ComponentResult> components;
  double wall_seconds = 0.0;
  Eigen::Index rows = 0;
  Eigen::Index columns = 0;
};

struct ComponentOptions {
  BpdnConfig solver;
  double tau_supp = 1e-3;
  bool debias = true;
};

/// Noise injection and finite differencing, in that order, as configured.
std::vector<Burst> prepare_bursts(std::vector<Burst> bursts, const RecoveryConfig& cfg);

/// Residual bound for component j under `policy`. `bursts` are the prepared
/// original-frame bursts, `rows` the dictionary's row layout,
/// `dictionary_velocity` the right-hand side the bound applies to, and
/// `chain_factor` the frame scale of component j.
double select_sigma(const SigmaPolicy& policy, VelocitySource velocity, std::span<const Burst> bursts,
                    std::span<const RowMeta> rows, const Eigen::VectorXd& dictionary_velocity, double chain_factor,
                    std::size_t component);

/// BPDN on one component, support detection, optional debiasing on the
/// monomial columns of the support in original coordinates, and conversion
/// of the result to monomial original-frame coefficients.
ComponentResult recover_component(const DictionaryMatrix& dictionary, const Eigen::VectorXd& velocity,
                                  const StackedData& raw, std::size_t component, double sigma,
                                  const ComponentOptions& options);

/// Runs recover_component for every configured component; bursts are the raw
/// generated bursts (noise and differencing are applied here). Errors and
/// success flags are filled in when the system has a known truth.
RecoveryResult recover_system(std::span<const Burst> bursts, const RecoveryConfig& cfg);

/// Generates bursts from cfg and recovers the configured components.
RecoveryResult run_recovery(const RecoveryConfig& cfg);

/// Support equality and rel_l2 <= rel_tol (percent) on aligned vectors.
bool evaluate_success(const Eigen::VectorXd& recovered, const Eigen::VectorXd& truth, double tau_supp,
                      double rel_tol);

/// Fills rel_l2 and success of a component against the truth model.
void score_component(ComponentResult& result, const QuadraticModel& truth, double tau_supp, double rel_tol);

enum class BoundMode { theoretical, effective };

BoundMode bound_mode_from_string(const std::string& name);

/// Burst-count bound: theoretical ceil(9 c s ln(N) ln(1/eps)), effective
/// ceil(c s ln(N)).
std::size_t required_bursts(std::size_t s, std::size_t N, double eps, BoundMode mode, double c);

struct ScanStep {
  std::size_t bursts = 0;
  std::size_t successes = 0;
  /// Trials run at this K; the scan moves on at the first failure.
  std::size_t attempted = 0;
};

struct MinBurstsScan {
  std::optional<std::size_t> min_bursts;
  std::vector<ScanStep> history;
};

/// Ascending scan over K (step 1) from `start` up to `cap`, returning the
/// first K where all `trials` recoveries of cfg.components succeed. Trial t
/// at K uses the seed derived from (cfg.seed, K, t).
MinBurstsScan scan_min_bursts(RecoveryConfig cfg, std::size_t trials, std::size_t start, std::size_t cap);

/// cfg with its burst seed set to `seed` and, when noise is configured, a
/// noise seed derived from it.
RecoveryConfig with_seed(RecoveryConfig cfg, std::uint64_t seed);

/// Success of one trial: bursts from `seed`, the configured components
/// recovered and scored. Non-converged solves and integration failures count
/// as failures.
bool run_success_trial(const RecoveryConfig& cfg, std::uint64_t seed);

}  // namespace dynrec
