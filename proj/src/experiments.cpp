#include "dynrec/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "dynrec/errors.hpp"
#include "dynrec/parallel.hpp"
#include "dynrec/random.hpp"

namespace dynrec {

using nlohmann::json;

std::string to_string(Experiment experiment) {
  switch (experiment) {
    case Experiment::phase_transition:
      return "phase-transition";
    case Experiment::fisher_table:
      return "fisher-table";
    case Experiment::localization:
      return "localization";
    case Experiment::single_trajectory:
      return "single-trajectory";
    case Experiment::noise_sweep:
      return "noise-sweep";
    case Experiment::compare:
      return "compare";
  }
  return {};
}

Experiment experiment_from_string(const std::string& name) {
  for (auto e : {Experiment::phase_transition, Experiment::fisher_table, Experiment::localization,
                 Experiment::single_trajectory, Experiment::noise_sweep, Experiment::compare}) {
    if (to_string(e) == name) return e;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string to_string(Preset preset) { return preset == Preset::desk ? "desk" : "paper"; }

Preset preset_from_string(const std::string& name) {
  if (name == "desk") return Preset::desk;
  if (name == "paper") return Preset::paper;
  throw ConfigError("unknown preset '" + name + "'");
}

namespace {

json base_config() {
  return {
      {"system", {{"kind", "lorenz96"}, {"n", 50}, {"forcing", 8.0}, {"gamma", 0.1}}},
      {"strategy",
       {{"name", "random-bursts"},
        {"ell", nullptr},
        {"rows", "all-samples"},
        {"basis", "legendre"},
        {"frame", "init-box"}}},
      {"dimensions", {{"bursts", 100}, {"samples", 5}, {"components", {10}}, {"c_eff", 3.2}}},
      {"sampling",
       {{"dt", 1e-3},
        {"init_lo", -1.0},
        {"init_hi", 1.0},
        {"velocity", "finite-difference"},
        {"dt_fine", 0.0},
        {"integrator_tol", 1e-9}}},
      {"solver",
       {{"sigma", "auto"},
        {"sigma_safety", 1.5},
        {"max_outer", 40},
        {"max_inner", 10000},
        {"tol_residual", 1e-6},
        {"tol_gap", 1e-9},
        {"tau_supp", 1e-3},
        {"rel_tol", 1.0},
        {"debias", true}}},
      {"noise", {{"ratio", 0.0}}},
      {"experiment",
       {{"seed", 1},
        {"trials", 20},
        {"bursts", json::array()},
        {"gammas", json::array()},
        {"windows", json::array()},
        {"levels", json::array()},
        {"velocities", json::array()},
        {"lambda", 0.05},
        {"lambda_large", nullptr},
        {"scan_start", nullptr},
        {"sparsity", 5}}},
  };
}

json fisher_system(std::size_t n, double gamma) {
  return {{"kind", "fisher"}, {"n", n}, {"forcing", 8.0}, {"gamma", gamma}};
}

// Keys of `patch` must exist in `reference`, recursively through objects.
void check_known_keys(const json& patch, const json& reference, const std::string& where) {
  if (!patch.is_object()) return;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    const json& ref = reference.at(it.key());
    if (ref.is_object()) {
      if (!it.value().is_object() && !it.value().is_null()) throw ConfigError("'" + path + "' must be an object");
      check_known_keys(it.value(), ref, path);
    }
  }
}

template <class T>
T read(const json& section, const char* key, const std::string& where) {
  try {
    return section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

template <class T>
std::optional<T> read_optional(const json& section, const char* key, const std::string& where) {
  if (!section.contains(key) || section.at(key).is_null()) return std::nullopt;
  return read<T>(section, key, where);
}

const json& section(const json& config, const char* key) {
  if (!config.contains(key) || !config.at(key).is_object()) {
    throw ConfigError(std::string("missing configuration section '") + key + "'");
  }
  return config.at(key);
}

std::size_t effective_window_bound(std::size_t s, std::size_t ell, double c) {
  return static_cast<std::size_t>(std::ceil(c * static_cast<double>(s) * std::log(static_cast<double>(ell))));
}

std::vector<std::size_t> true_positions(const QuadraticModel& truth, std::size_t j) {
  std::vector<std::size_t> out;
  for (Eigen::SparseMatrix<double>::InnerIterator it(truth.coeffs, static_cast<Eigen::Index>(j)); it; ++it) {
    out.push_back(static_cast<std::size_t>(it.row()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double truth_at(const QuadraticModel& truth, std::size_t j, const Column& column) {
  return truth.coeffs.coeff(static_cast<Eigen::Index>(column_position(column, truth.n)),
                            static_cast<Eigen::Index>(j));
}

// Columns worth reporting for one component: the true support plus anything
// recovered before or after debiasing, in canonical order.
std::vector<Column> reported_columns(const ComponentResult& result, const QuadraticModel& truth, double tau_supp) {
  std::set<std::size_t> positions;
  for (auto p : true_positions(truth, result.component)) positions.insert(p);
  for (auto k : support_of(result.pre_debias, tau_supp)) positions.insert(column_position(result.columns[k], truth.n));
  for (auto k : result.support) positions.insert(column_position(result.columns[k], truth.n));
  std::vector<Column> out;
  for (auto p : positions) out.push_back(column_at(p, truth.n));
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

json default_config(Experiment experiment, Preset preset) {
  json cfg = base_config();
  const bool paper = preset == Preset::paper;
  switch (experiment) {
    case Experiment::phase_transition: {
      json bursts = json::array();
      if (paper) {
        for (int K = 5; K <= 265; K += 5) bursts.push_back(K);
      } else {
        bursts = {20, 40, 60, 80, 100};
      }
      cfg["experiment"]["bursts"] = bursts;
      cfg["experiment"]["trials"] = paper ? 100 : 20;
      break;
    }
    case Experiment::fisher_table: {
      const std::size_t n = paper ? 200 : 100;
      cfg["system"] = fisher_system(n, 0.1);
      cfg["dimensions"]["bursts"] = required_bursts(5, num_columns(n), 0.5, BoundMode::effective, 3.2);
      cfg["dimensions"]["components"] = {1};
      cfg["sampling"]["init_lo"] = 0.0;
      cfg["experiment"]["gammas"] = {0.25, 0.1, 0.01, 0.0};
      break;
    }
    case Experiment::localization:
      cfg["system"] = fisher_system(1000, 0.1);
      cfg["strategy"]["name"] = "localized";
      cfg["strategy"]["ell"] = 11;
      cfg["dimensions"]["components"] = {1};
      cfg["sampling"]["init_lo"] = 0.0;
      cfg["experiment"]["trials"] = 10;
      cfg["experiment"]["windows"] = paper ? json{11, 31, 51, 101} : json{11, 21, 31};
      break;
    case Experiment::single_trajectory:
      cfg["strategy"]["name"] = "single-trajectory";
      cfg["strategy"]["frame"] = "data-box";
      cfg["dimensions"]["bursts"] = 1;
      cfg["dimensions"]["samples"] = 500;
      cfg["dimensions"]["components"] = {1};
      cfg["sampling"]["dt"] = 1.0;
      cfg["sampling"]["dt_fine"] = 0.01;
      cfg["experiment"]["velocities"] = {"exact-observed", "fine-step-fd"};
      break;
    case Experiment::noise_sweep:
      cfg["dimensions"]["bursts"] = 200;
      cfg["dimensions"]["samples"] = 3;
      cfg["dimensions"]["components"] = {1};
      cfg["experiment"]["trials"] = 10;
      cfg["experiment"]["levels"] = {0.0, 1.0, 2.5, 5.0, 6.0, 7.0};
      break;
    case Experiment::compare:
      cfg["dimensions"]["components"] = {35};
      break;
  }
  return cfg;
}

json resolve_config(Experiment experiment, Preset preset, const std::optional<std::filesystem::path>& file,
                    const json& overrides) {
  const json defaults = default_config(experiment, preset);
  json cfg = defaults;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    json patch;
    try {
      patch = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
    }
    if (!patch.is_object()) throw ConfigError("config file must hold a JSON object");
    check_known_keys(patch, defaults, "");
    cfg.merge_patch(patch);
  }
  check_known_keys(overrides, defaults, "");
  cfg.merge_patch(overrides);
  return cfg;
}

RecoveryConfig recovery_config_from_json(const json& config) {
  RecoveryConfig cfg;
  try {
    const json& sys = section(config, "system");
    const auto kind = read<std::string>(sys, "kind", "system");
    const auto n = read<std::size_t>(sys, "n", "system");
    if (kind == "lorenz96") {
      cfg.system = SystemSpec::lorenz96(n, read<double>(sys, "forcing", "system"));
    } else if (kind == "fisher") {
      cfg.system = SystemSpec::fisher(n, read<double>(sys, "gamma", "system"));
    } else {
      throw ConfigError("system.kind must be lorenz96 or fisher");
    }

    const json& strat = section(config, "strategy");
    cfg.strategy = strategy_from_string(read<std::string>(strat, "name", "strategy"));
    cfg.ell = read_optional<std::size_t>(strat, "ell", "strategy");
    cfg.rows = row_selection_from_string(read<std::string>(strat, "rows", "strategy"));
    cfg.basis = basis_from_string(read<std::string>(strat, "basis", "strategy"));
    cfg.frame = frame_mode_from_string(read<std::string>(strat, "frame", "strategy"));

    const json& dims = section(config, "dimensions");
    cfg.bursts = read<std::size_t>(dims, "bursts", "dimensions");
    cfg.samples = read<std::size_t>(dims, "samples", "dimensions");
    cfg.c_eff = read<double>(dims, "c_eff", "dimensions");
    cfg.components.clear();
    for (auto one_based : read<std::vector<std::size_t>>(dims, "components", "dimensions")) {
      if (one_based < 1) throw ConfigError("dimensions.components are one-based");
      cfg.components.push_back(one_based - 1);
    }

    const json& samp = section(config, "sampling");
    cfg.dt = read<double>(samp, "dt", "sampling");
    cfg.init = {read<double>(samp, "init_lo", "sampling"), read<double>(samp, "init_hi", "sampling")};
    cfg.velocity = velocity_source_from_string(read<std::string>(samp, "velocity", "sampling"));
    cfg.dt_fine = read<double>(samp, "dt_fine", "sampling");
    cfg.integrator_tol = read<double>(samp, "integrator_tol", "sampling");

    const json& solver = section(config, "solver");
    const json& sigma = solver.at("sigma");
    if (sigma.is_string()) {
      if (sigma.get<std::string>() != "auto") throw ConfigError("solver.sigma must be \"auto\" or a number");
      cfg.sigma.kind = SigmaPolicy::Kind::automatic;
    } else if (sigma.is_number()) {
      cfg.sigma = SigmaPolicy::fixed_value(sigma.get<double>());
    } else {
      throw ConfigError("solver.sigma must be \"auto\" or a number");
    }
    cfg.sigma.safety = read<double>(solver, "sigma_safety", "solver");
    cfg.solver.max_outer = read<int>(solver, "max_outer", "solver");
    cfg.solver.max_inner = read<int>(solver, "max_inner", "solver");
    cfg.solver.tol_residual = read<double>(solver, "tol_residual", "solver");
    cfg.solver.tol_gap = read<double>(solver, "tol_gap", "solver");
    cfg.tau_supp = read<double>(solver, "tau_supp", "solver");
    cfg.rel_tol = read<double>(solver, "rel_tol", "solver");
    cfg.debias = read<bool>(solver, "debias", "solver");

    const double ratio = read<double>(section(config, "noise"), "ratio", "noise");
    if (ratio < 0.0) throw ConfigError("noise.ratio must be non-negative");
    if (ratio > 0.0) cfg.noise = NoiseSpec{ratio, 0};

    cfg.seed = read<std::uint64_t>(section(config, "experiment"), "seed", "experiment");
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentParams experiment_params_from_json(const json& config) {
  ExperimentParams p;
  try {
    const json& ex = section(config, "experiment");
    p.seed = read<std::uint64_t>(ex, "seed", "experiment");
    p.trials = read<std::size_t>(ex, "trials", "experiment");
    p.burst_counts = read<std::vector<std::size_t>>(ex, "bursts", "experiment");
    p.gammas = read<std::vector<double>>(ex, "gammas", "experiment");
    p.windows = read<std::vector<std::size_t>>(ex, "windows", "experiment");
    p.noise_levels = read<std::vector<double>>(ex, "levels", "experiment");
    for (const auto& name : read<std::vector<std::string>>(ex, "velocities", "experiment")) {
      p.velocity_sources.push_back(velocity_source_from_string(name));
    }
    p.lambda = read<double>(ex, "lambda", "experiment");
    p.lambda_large = read_optional<double>(ex, "lambda_large", "experiment");
    p.scan_start = read_optional<std::size_t>(ex, "scan_start", "experiment");
    p.sparsity = read<std::size_t>(ex, "sparsity", "experiment");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (p.trials < 1) throw ConfigError("experiment.trials must be at least 1");
  if (!(p.lambda > 0.0)) throw ConfigError("experiment.lambda must be positive");
  if (p.sparsity < 1) throw ConfigError("experiment.sparsity must be at least 1");
  return p;
}

ExperimentReport run_phase_transition(const RecoveryConfig& cfg, const ExperimentParams& params) {
  if (params.burst_counts.empty()) throw ConfigError("experiment.bursts lists no burst counts");
  ExperimentReport report;
  report.name = to_string(Experiment::phase_transition);
  report.seed = params.seed;
  report.table.header = {"K", "K_over_N", "trials", "successes", "probability"};
  const double N = static_cast<double>(cfg.strategy == Strategy::localized ? num_columns(*cfg.ell)
                                                                            : num_columns(cfg.system.n));
  for (auto K : params.burst_counts) {
    RecoveryConfig trial_cfg = cfg;
    trial_cfg.bursts = K;
    std::vector<char> ok(params.trials, 0);
    parallel_for(params.trials,
                 [&](std::size_t t) { ok[t] = run_success_trial(trial_cfg, derive_seed(params.seed, {K, t})); });
    const auto successes = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    report.table.add_row({std::to_string(K), format_double(static_cast<double>(K) / N),
                          std::to_string(params.trials), std::to_string(successes),
                          format_double(static_cast<double>(successes) / static_cast<double>(params.trials))});
  }
  return report;
}

ExperimentReport run_fisher_table(const RecoveryConfig& cfg, const ExperimentParams& params) {
  if (params.gammas.empty()) throw ConfigError("experiment.gammas lists no values");
  ExperimentReport report;
  report.name = to_string(Experiment::fisher_table);
  report.seed = params.seed;
  report.table.header = {"term", "gamma", "recovered", "debiased", "true", "converged"};
  json successes = json::object();
  for (double gamma : params.gammas) {
    RecoveryConfig run = with_seed(cfg, params.seed);
    run.system = SystemSpec::fisher(cfg.system.n, gamma);
    const auto result = run_recovery(run);
    const QuadraticModel truth = true_model(run.system);
    for (const auto& component : result.components) {
      for (const auto& column : reported_columns(component, truth, run.tau_supp)) {
        report.table.add_row({term_name(column), format_double(gamma),
                              format_double(component.pre_debias_coefficient(column)),
                              format_double(component.coefficient(column)),
                              format_double(truth_at(truth, component.component, column)),
                              format_bool(component.solver_converged)});
      }
      successes[format_double(gamma)] = component.success;
    }
  }
  report.summary["success"] = successes;
  return report;
}

ExperimentReport run_localization(const RecoveryConfig& cfg, const ExperimentParams& params) {
  if (params.windows.empty()) throw ConfigError("experiment.windows lists no window sizes");
  ExperimentReport report;
  report.name = to_string(Experiment::localization);
  report.seed = params.seed;
  report.table.header = {"ell", "min_K", "ratio", "resolved"};
  json histories = json::object();
  const std::size_t s = params.sparsity;
  for (auto ell : params.windows) {
    RecoveryConfig run = cfg;
    run.strategy = Strategy::localized;
    run.ell = ell;
    run.seed = derive_seed(params.seed, {ell});
    const std::size_t start = params.scan_start.value_or(s + 1);
    const std::size_t cap = 4 * effective_window_bound(s, ell, cfg.c_eff);
    const auto scan = scan_min_bursts(run, params.trials, start, cap);
    json history = json::array();
    for (const auto& step : scan.history) {
      history.push_back({{"K", step.bursts}, {"successes", step.successes}, {"attempted", step.attempted}});
    }
    histories[std::to_string(ell)] = history;
    if (scan.min_bursts) {
      const double ratio = static_cast<double>(*scan.min_bursts) / (static_cast<double>(s) * std::log(ell));
      report.table.add_row({std::to_string(ell), std::to_string(*scan.min_bursts), format_double(ratio), "Y"});
    } else {
      report.table.add_row({std::to_string(ell), "", "", "N"});
    }
  }
  report.summary["scan"] = histories;
  return report;
}

ExperimentReport run_single_trajectory(const RecoveryConfig& cfg, const ExperimentParams& params) {
  ExperimentReport report;
  report.name = to_string(Experiment::single_trajectory);
  report.seed = params.seed;
  report.table.header = {"velocity", "term", "recovered", "debiased", "true"};
  auto sources = params.velocity_sources;
  if (sources.empty()) sources.push_back(cfg.velocity);
  json successes = json::object();
  for (auto source : sources) {
    RecoveryConfig run = with_seed(cfg, params.seed);
    run.velocity = source;
    const auto result = run_recovery(run);
    const QuadraticModel truth = true_model(run.system);
    for (const auto& component : result.components) {
      for (const auto& column : reported_columns(component, truth, run.tau_supp)) {
        report.table.add_row({to_string(source), term_name(column),
                              format_double(component.pre_debias_coefficient(column)),
                              format_double(component.coefficient(column)),
                              format_double(truth_at(truth, component.component, column))});
      }
      successes[to_string(source)] = component.success;
    }
  }
  report.summary["success"] = successes;
  return report;
}

namespace {

struct NoiseTrial {
  double rel_l2 = 100.0;
  bool support_ok = false;
  double oracle_rel_l2 = 100.0;
};

NoiseTrial run_noise_trial(const RecoveryConfig& cfg, std::uint64_t seed) {
  NoiseTrial out;
  const RecoveryConfig run = with_seed(cfg, seed);
  const std::size_t j = run.components.front();
  const QuadraticModel truth = true_model(run.system);
  const auto support = true_positions(truth, j);
  const Eigen::VectorXd c_true = truth.component(j);

  std::vector<Burst> bursts;
  try {
    bursts = generate_bursts(run.system, run.burst_options());
  } catch (const IntegrationFailure&) {
    return out;
  }
  const auto result = recover_system(bursts, run);
  const ComponentResult& c = result.components.front();
  out.rel_l2 = c.rel_l2.value_or(100.0);

  // Four largest pre-debias magnitudes against the true support.
  std::vector<std::size_t> order(static_cast<std::size_t>(c.pre_debias.size()));
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  const std::size_t top = std::min(support.size(), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double ma = std::abs(c.pre_debias(static_cast<Eigen::Index>(a)));
                      const double mb = std::abs(c.pre_debias(static_cast<Eigen::Index>(b)));
                      return ma != mb ? ma > mb : a < b;
                    });
  std::vector<std::size_t> largest;
  for (std::size_t k = 0; k < top; ++k) {
    if (c.pre_debias(static_cast<Eigen::Index>(order[k])) != 0.0) {
      largest.push_back(column_position(c.columns[order[k]], truth.n));
    }
  }
  std::sort(largest.begin(), largest.end());
  out.support_ok = largest == support;

  // Least squares on the true support of the same noisy data.
  const auto prepared = prepare_bursts(bursts, run);
  const StackedData raw = stack_bursts(prepared, run.rows);
  std::vector<Column> columns;
  for (auto p : support) columns.push_back(column_at(p, truth.n));
  const Eigen::MatrixXd A = evaluate_dictionary(raw.states, Basis::monomial, columns);
  const Eigen::VectorXd fit = min_norm_least_squares(A, raw.velocities.col(static_cast<Eigen::Index>(j)));
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(c_true.size());
  for (std::size_t k = 0; k < support.size(); ++k) {
    oracle(static_cast<Eigen::Index>(support[k])) = fit(static_cast<Eigen::Index>(k));
  }
  out.oracle_rel_l2 = relative_l2_error(oracle, c_true);
  return out;
}

}  // namespace

ExperimentReport run_noise_sweep(const RecoveryConfig& cfg, const ExperimentParams& params) {
  if (params.noise_levels.empty()) throw ConfigError("experiment.levels lists no noise levels");
  if (cfg.components.size() != 1) throw ConfigError("noise sweep needs exactly one component");
  ExperimentReport report;
  report.name = to_string(Experiment::noise_sweep);
  report.seed = params.seed;
  report.table.header = {"noise_pct", "trials", "rel_l2_pct", "support_ok", "support_ok_trials", "oracle_rel_l2_pct"};
  json per_trial = json::object();
  for (double level : params.noise_levels) {
    if (level < 0.0) throw ConfigError("noise levels must be non-negative");
    RecoveryConfig run = cfg;
    run.noise = level > 0.0 ? std::optional<NoiseSpec>(NoiseSpec{level, 0}) : std::nullopt;
    std::vector<NoiseTrial> trials(params.trials);
    // Trial t sees the same clean bursts and noise direction at every level.
    parallel_for(params.trials,
                 [&](std::size_t t) { trials[t] = run_noise_trial(run, derive_seed(params.seed, {t})); });
    std::vector<double> rel, oracle;
    std::size_t ok = 0;
    json detail = json::array();
    for (const auto& t : trials) {
      rel.push_back(t.rel_l2);
      oracle.push_back(t.oracle_rel_l2);
      ok += t.support_ok;
      detail.push_back({{"rel_l2_pct", t.rel_l2}, {"support_ok", t.support_ok}, {"oracle_rel_l2_pct", t.oracle_rel_l2}});
    }
    per_trial[format_double(level)] = detail;
    report.table.add_row({format_double(level), std::to_string(params.trials), format_double(median(rel)),
                          2 * ok >= params.trials ? "Y" : "N", std::to_string(ok), format_double(median(oracle))});
  }
  report.summary["trials"] = per_trial;
  return report;
}

ExperimentReport run_compare(const RecoveryConfig& cfg, const ExperimentParams& params) {
  if (cfg.components.size() != 1) throw ConfigError("compare needs exactly one component");
  ExperimentReport report;
  report.name = to_string(Experiment::compare);
  report.seed = params.seed;
  report.table.header = {"method", "position", "term", "coefficient"};

  const RecoveryConfig run = with_seed(cfg, params.seed);
  const std::size_t j = run.components.front();
  const std::size_t n = run.system.n;
  const auto bursts = generate_bursts(run.system, run.burst_options());
  const auto lbp = recover_system(bursts, run).components.front();

  const StackedData raw = stack_bursts(prepare_bursts(bursts, run), run.rows);
  const auto columns = full_columns(n);
  const Eigen::MatrixXd A = evaluate_dictionary(raw.states, Basis::monomial, columns);
  const Eigen::VectorXd v = raw.velocities.col(static_cast<Eigen::Index>(j));
  const Eigen::VectorXd ls = min_norm_least_squares(A, v);
  const Eigen::VectorXd stls = sequential_threshold_ls(A, v, params.lambda);
  const double lambda_large = params.lambda_large.value_or(10.0 * ls.lpNorm<Eigen::Infinity>());
  const Eigen::VectorXd stls_large = sequential_threshold_ls(A, v, lambda_large);

  // Full-length L-BP vector over the canonical column order.
  Eigen::VectorXd lbp_full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < lbp.columns.size(); ++k) {
    lbp_full(static_cast<Eigen::Index>(column_position(lbp.columns[k], n))) = lbp.coeffs(static_cast<Eigen::Index>(k));
  }

  const std::pair<const char*, const Eigen::VectorXd*> methods[] = {
      {"l-bp", &lbp_full}, {"least-squares", &ls}, {"stls", &stls}, {"stls-large", &stls_large}};
  json counts = json::object();
  for (const auto& [name, vec] : methods) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      report.table.add_row({name, std::to_string(k), term_name(columns[k]),
                            format_double((*vec)(static_cast<Eigen::Index>(k)))});
    }
    counts[name] = support_of(*vec, run.tau_supp).size();
  }

  std::vector<std::size_t> ls_thresholded;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (std::abs(ls(static_cast<Eigen::Index>(k))) >= params.lambda) ls_thresholded.push_back(k);
  }
  report.summary["entries_above_threshold"] = counts;
  report.summary["l_bp_success"] = lbp.success;
  report.summary["stls_matches_thresholded_least_squares"] = support_of(stls, 0.0) == ls_thresholded;
  report.summary["stls_large_lambda"] = lambda_large;
  report.summary["stls_large_is_zero"] = stls_large.lpNorm<Eigen::Infinity>() == 0.0;
  report.summary["rows"] = A.rows();
  report.summary["columns"] = A.cols();
  return report;
}

ExperimentReport run_experiment(Experiment experiment, const json& config) {
  const RecoveryConfig cfg = recovery_config_from_json(config);
  const ExperimentParams params = experiment_params_from_json(config);
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  switch (experiment) {
    case Experiment::phase_transition:
      report = run_phase_transition(cfg, params);
      break;
    case Experiment::fisher_table:
      report = run_fisher_table(cfg, params);
      break;
    case Experiment::localization:
      report = run_localization(cfg, params);
      break;
    case Experiment::single_trajectory:
      report = run_single_trajectory(cfg, params);
      break;
    case Experiment::noise_sweep:
      report = run_noise_sweep(cfg, params);
      break;
    case Experiment::compare:
      report = run_compare(cfg, params);
      break;
  }
  report.parameters = config;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

json report_metadata(const ExperimentReport& report) {
  return {{"experiment", report.name},
          {"seed", report.seed},
          {"wall_seconds", report.wall_seconds},
          {"parameters", report.parameters},
          {"summary", report.summary}};
}

void write_report(const ExperimentReport& report, const std::filesystem::path& path) {
  write_csv(path, report.table);
  std::filesystem::path meta = path;
  meta += ".meta.json";
  std::ofstream out(meta);
  if (!out) throw Error("cannot open " + meta.string() + " for writing");
  out << report_metadata(report).dump(2) << '\n';
}

}  // namespace dynrec
