#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynrec/csv.hpp"
#include "dynrec/recovery.hpp"

namespace dynrec {

enum class Experiment { phase_transition, fisher_table, localization, single_trajectory, noise_sweep, compare };
enum class Preset { desk, paper };

std::string to_string(Experiment experiment);
Experiment experiment_from_string(const std::string& name);
std::string to_string(Preset preset);
Preset preset_from_string(const std::string& name);

/// Full default configuration of an experiment: a JSON object with the keys
/// system, strategy, dimensions, sampling, solver, noise and experiment.
nlohmann::json default_config(Experiment experiment, Preset preset);

/// Defaults, then the file (merge patch), then `overrides` (merge patch).
/// Keys unknown to the defaults are rejected with ConfigError.
nlohmann::json resolve_config(Experiment experiment, Preset preset, const std::optional<std::filesystem::path>& file,
                              const nlohmann::json& overrides = nlohmann::json::object());

/// Pipeline settings from a resolved document. Component indices in the
/// document are one-based.
RecoveryConfig recovery_config_from_json(const nlohmann::json& config);

/// Driver settings from the "experiment" section.
struct ExperimentParams {
  std::uint64_t seed = 1;
  std::size_t trials = 20;
  std::vector<std::size_t> burst_counts;
  std::vector<double> gammas;
  std::vector<std::size_t> windows;
  std::vector<double> noise_levels;
  std::vector<VelocitySource> velocity_sources;
  double lambda = 0.05;
  /// STLS threshold for the trivial-solution check; unset means ten times
  /// the largest least-squares magnitude.
  std::optional<double> lambda_large;
  /// First K of the minimum-K scan; unset means sparsity + 1.
  std::optional<std::size_t> scan_start;
  /// Sparsity used by the localization ratio and scan cap.
  std::size_t sparsity = 5;
};

ExperimentParams experiment_params_from_json(const nlohmann::json& config);

struct ExperimentReport {
  std::string name;
  nlohmann::json parameters;
  CsvTable table;
  /// Aggregates that do not fit the row schema (sparsity counts, scan
  /// histories); written to the metadata file, never to the CSV.
  nlohmann::json summary = nlohmann::json::object();
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

/// Columns: K, K_over_N, trials, successes, probability.
ExperimentReport run_phase_transition(const RecoveryConfig& cfg, const ExperimentParams& params);
/// Columns: term, gamma, recovered, debiased, true, converged. cfg.system
/// supplies n; gamma is taken from params.gammas.
ExperimentReport run_fisher_table(const RecoveryConfig& cfg, const ExperimentParams& params);
/// Columns: ell, min_K, ratio, resolved. Unresolved rows leave min_K and
/// ratio empty.
ExperimentReport run_localization(const RecoveryConfig& cfg, const ExperimentParams& params);
/// Columns: velocity, term, recovered, debiased, true.
ExperimentReport run_single_trajectory(const RecoveryConfig& cfg, const ExperimentParams& params);
/// Columns: noise_pct, trials, rel_l2_pct, support_ok, support_ok_trials,
/// oracle_rel_l2_pct. rel_l2_pct is the median over trials; support_ok is Y
/// when the four largest L-BP coefficients match the true support in at
/// least half the trials; the oracle column is the median error of least
/// squares restricted to the true support on the same noisy data.
ExperimentReport run_noise_sweep(const RecoveryConfig& cfg, const ExperimentParams& params);
/// Columns: method, position, term, coefficient, for methods l-bp,
/// least-squares, stls and stls-large.
ExperimentReport run_compare(const RecoveryConfig& cfg, const ExperimentParams& params);

ExperimentReport run_experiment(Experiment experiment, const nlohmann::json& config);

/// Parameters, seed, wall time and summary as JSON.
nlohmann::json report_metadata(const ExperimentReport& report);

/// Writes the CSV to `path` and the metadata next to it as `<path>.meta.json`.
void write_report(const ExperimentReport& report, const std::filesystem::path& path);

}  // namespace dynrec
