#include "dynrec/recovery.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "dynrec/errors.hpp"
#include "dynrec/parallel.hpp"
#include "dynrec/random.hpp"

namespace dynrec {

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::random_bursts:
      return "random-bursts";
    case Strategy::localized:
      return "localized";
    case Strategy::single_trajectory:
      return "single-trajectory";
  }
  return {};
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "random-bursts") return Strategy::random_bursts;
  if (name == "localized") return Strategy::localized;
  if (name == "single-trajectory") return Strategy::single_trajectory;
  throw InvalidArgument("unknown strategy '" + name + "'");
}

std::string to_string(FrameMode mode) {
  switch (mode) {
    case FrameMode::original:
      return "original";
    case FrameMode::init_box:
      return "init-box";
    case FrameMode::data_box:
      return "data-box";
  }
  return {};
}

FrameMode frame_mode_from_string(const std::string& name) {
  if (name == "original") return FrameMode::original;
  if (name == "init-box") return FrameMode::init_box;
  if (name == "data-box") return FrameMode::data_box;
  throw InvalidArgument("unknown frame '" + name + "'");
}

void RecoveryConfig::validate() const {
  system.validate();
  solver.validate();
  if (bursts < 1 || samples < 1) throw InvalidArgument("need at least one burst and one sample");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (strategy == Strategy::localized) {
    if (!ell) throw InvalidArgument("localized strategy needs a window size");
    if (*ell % 2 == 0 || *ell < 1 || *ell > system.n) throw InvalidArgument("window must be odd and at most n");
  }
  if (strategy == Strategy::single_trajectory && bursts != 1) {
    throw InvalidArgument("single-trajectory strategy uses exactly one burst");
  }
  if (velocity == VelocitySource::finite_difference && samples < 3) {
    throw InsufficientSamples("finite-difference velocities need at least 3 samples per burst");
  }
  if (sigma.kind == SigmaPolicy::Kind::fixed && sigma.value < 0.0) throw InvalidArgument("sigma must be >= 0");
  if (tau_supp < 0.0 || rel_tol < 0.0) throw InvalidArgument("thresholds must be non-negative");
  for (auto j : components) {
    if (j >= system.n) throw InvalidArgument("component index out of range");
  }
}

BurstOptions RecoveryConfig::burst_options() const {
  BurstOptions options;
  options.bursts = bursts;
  options.samples = samples;
  options.dt = dt;
  options.init = init;
  options.velocity_source = velocity;
  options.dt_fine = dt_fine;
  options.tol = integrator_tol;
  options.seed = seed;
  return options;
}

namespace {

double coefficient_of(const std::vector<Column>& columns, const Eigen::VectorXd& values, const Column& column) {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] == column) return values(static_cast<Eigen::Index>(k));
  }
  return 0.0;
}

std::optional<AffineTransform> frame_transform(const RecoveryConfig& cfg, const Eigen::MatrixXd& states) {
  double lo = cfg.init.lo;
  double hi = cfg.init.hi;
  switch (cfg.frame) {
    case FrameMode::original:
      return std::nullopt;
    case FrameMode::init_box:
      break;
    case FrameMode::data_box:
      hi = states.cwiseAbs().maxCoeff();
      lo = -hi;
      if (!(hi > 0.0)) return std::nullopt;
      break;
  }
  if (lo == -1.0 && hi == 1.0) return std::nullopt;
  return AffineTransform::uniform(cfg.system.n, lo, hi);
}

}  // namespace

double ComponentResult::coefficient(const Column& column) const { return coefficient_of(columns, coeffs, column); }

double ComponentResult::pre_debias_coefficient(const Column& column) const {
  return coefficient_of(columns, pre_debias, column);
}

std::vector<Burst> prepare_bursts(std::vector<Burst> bursts, const RecoveryConfig& cfg) {
  if (cfg.noise && cfg.noise->ratio > 0.0) add_state_noise(bursts, *cfg.noise);
  if (cfg.velocity == VelocitySource::finite_difference) differentiate_bursts(bursts);
  return bursts;
}

double select_sigma(const SigmaPolicy& policy, VelocitySource velocity, std::span<const Burst> bursts,
                    std::span<const RowMeta> rows, const Eigen::VectorXd& dictionary_velocity, double chain_factor,
                    std::size_t component) {
  if (policy.kind == SigmaPolicy::Kind::fixed) return policy.value;
  if (static_cast<Eigen::Index>(rows.size()) != dictionary_velocity.size()) {
    throw ShapeError("row layout does not match the velocity vector");
  }
  const auto j = static_cast<Eigen::Index>(component);
  switch (velocity) {
    case VelocitySource::exact_observed:
      return 1e-8 * dictionary_velocity.norm();
    case VelocitySource::finite_difference: {
      double sum = 0.0;
      for (const auto& row : rows) {
        const Burst& b = bursts[row.burst];
        const auto m = static_cast<Eigen::Index>(b.samples());
        if (m < 3) throw InsufficientSamples("sigma estimate needs three samples per burst");
        const auto i = static_cast<Eigen::Index>(row.sample);
        if (i != 0 && i != m - 1) continue;
        const Eigen::Index c = i == 0 ? 1 : m - 2;
        const double second = b.states(c + 1, j) - 2.0 * b.states(c, j) + b.states(c - 1, j);
        const double e = second / (2.0 * b.dt);
        sum += e * e;
      }
      return policy.safety * std::sqrt(sum) * chain_factor;
    }
    case VelocitySource::fine_step_fd: {
      double sum = 0.0;
      for (const auto& row : rows) {
        const Burst& b = bursts[row.burst];
        if (!b.velocity_error) throw IncompleteBurst("fine-step burst lacks an error estimate");
        const double e = (*b.velocity_error)(static_cast<Eigen::Index>(row.sample), j);
        sum += e * e;
      }
      return std::max(policy.safety * std::sqrt(sum) * chain_factor, 1e-8 * dictionary_velocity.norm());
    }
  }
  return 0.0;
}

ComponentResult recover_component(const DictionaryMatrix& dictionary, const Eigen::VectorXd& velocity,
                                  const StackedData& raw, std::size_t component, double sigma,
                                  const ComponentOptions& options) {
  if (velocity.size() != dictionary.row_count() || raw.states.rows() != dictionary.row_count()) {
    throw ShapeError("dictionary, velocities and raw data must be row-aligned");
  }
  ComponentResult result;
  result.component = component;
  result.columns = dictionary.columns;
  result.sigma = sigma;

  BpdnConfig solver = options.solver;
  solver.sigma = sigma;
  const BpdnResult bp = solve_bpdn(dictionary.values, velocity, solver);
  result.solver_converged = bp.converged;
  result.solver_coeffs = bp.x;

  Eigen::VectorXd mono = dictionary.basis == Basis::legendre
                             ? change_basis(bp.x, Basis::legendre, Basis::monomial, dictionary.columns)
                             : bp.x;
  if (dictionary.frame) mono = pullback_affine(mono, dictionary.columns, *dictionary.frame, component);
  result.pre_debias = mono;
  result.coeffs = mono;

  if (options.debias) {
    const auto support = support_of(mono, options.tau_supp);
    if (!support.empty()) {
      if (support.size() > static_cast<std::size_t>(raw.states.rows())) {
        result.debias_full_rank = false;
      } else {
        std::vector<Column> restricted;
        restricted.reserve(support.size());
        for (auto k : support) restricted.push_back(dictionary.columns[k]);
        const Eigen::MatrixXd A = evaluate_dictionary(raw.states, Basis::monomial, restricted);
        const auto fit = debias(A, raw.velocities.col(static_cast<Eigen::Index>(component)));
        result.debias_full_rank = fit.full_rank;
        result.coeffs.setZero();
        for (std::size_t k = 0; k < support.size(); ++k) {
          result.coeffs(static_cast<Eigen::Index>(support[k])) = fit.coeffs(static_cast<Eigen::Index>(k));
        }
      }
    }
  }
  result.support = support_of(result.coeffs, options.tau_supp);
  return result;
}

bool evaluate_success(const Eigen::VectorXd& recovered, const Eigen::VectorXd& truth, double tau_supp,
                      double rel_tol) {
  if (recovered.size() != truth.size()) throw ShapeError("coefficient vectors differ in length");
  if (support_of(recovered, tau_supp) != support_of(truth, 0.0)) return false;
  return relative_l2_error(recovered, truth) <= rel_tol;
}

void score_component(ComponentResult& result, const QuadraticModel& truth, double tau_supp, double rel_tol) {
  const std::size_t n = truth.n;
  std::unordered_map<std::size_t, std::size_t> slot;
  std::vector<double> rec, ref;
  for (std::size_t k = 0; k < result.columns.size(); ++k) {
    slot.emplace(column_position(result.columns[k], n), rec.size());
    rec.push_back(result.coeffs(static_cast<Eigen::Index>(k)));
    ref.push_back(0.0);
  }
  for (Eigen::SparseMatrix<double>::InnerIterator it(truth.coeffs, static_cast<Eigen::Index>(result.component)); it;
       ++it) {
    const auto pos = static_cast<std::size_t>(it.row());
    auto found = slot.find(pos);
    if (found == slot.end()) {
      rec.push_back(0.0);
      ref.push_back(it.value());
    } else {
      ref[found->second] = it.value();
    }
  }
  const Eigen::Map<const Eigen::VectorXd> r(rec.data(), static_cast<Eigen::Index>(rec.size()));
  const Eigen::Map<const Eigen::VectorXd> t(ref.data(), static_cast<Eigen::Index>(ref.size()));
  if (t.norm() == 0.0) {
    result.rel_l2.reset();
    result.success = r.lpNorm<Eigen::Infinity>() == 0.0;
    return;
  }
  result.rel_l2 = relative_l2_error(r, t);
  result.success = evaluate_success(r, t, tau_supp, rel_tol);
}

RecoveryResult recover_system(std::span<const Burst> bursts, const RecoveryConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Burst> prepared = prepare_bursts(std::vector<Burst>(bursts.begin(), bursts.end()), cfg);
  const StackedData raw = stack_bursts(prepared, cfg.rows);
  const auto transform = frame_transform(cfg, raw.states);
  const std::size_t n = cfg.system.n;
  const QuadraticModel truth = true_model(cfg.system);

  std::vector<std::size_t> components = cfg.components;
  if (components.empty()) {
    components.resize(n);
    for (std::size_t j = 0; j < n; ++j) components[j] = j;
  }

  std::optional<AssembledDictionary> shared;
  if (cfg.strategy != Strategy::localized) shared = assemble_dictionary(raw, cfg.basis, {}, transform);

  const ComponentOptions options{cfg.solver, cfg.tau_supp, cfg.debias};
  RecoveryResult result;
  result.components.resize(components.size());
  parallel_for(components.size(), [&](std::size_t idx) {
    const std::size_t j = components[idx];
    std::optional<AssembledDictionary> local;
    if (!shared) {
      const auto columns = localized_columns(j, *cfg.ell, n);
      local = assemble_dictionary(raw, cfg.basis, columns, transform);
    }
    const AssembledDictionary& assembled = shared ? *shared : *local;
    const Eigen::VectorXd v = assembled.velocities.col(static_cast<Eigen::Index>(j));
    const double chain = transform ? transform->scale(j) : 1.0;
    const double sigma = select_sigma(cfg.sigma, cfg.velocity, prepared, raw.rows, v, chain, j);
    auto component = recover_component(assembled.dictionary, v, raw, j, sigma, options);
    score_component(component, truth, cfg.tau_supp, cfg.rel_tol);
    result.components[idx] = std::move(component);
  });

  result.rows = raw.states.rows();
  if (shared) {
    result.columns = shared->dictionary.column_count();
  } else {
    result.columns = static_cast<Eigen::Index>(num_columns(*cfg.ell));
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RecoveryResult run_recovery(const RecoveryConfig& cfg) {
  cfg.validate();
  const auto bursts = generate_bursts(cfg.system, cfg.burst_options());
  return recover_system(bursts, cfg);
}

BoundMode bound_mode_from_string(const std::string& name) {
  if (name == "theoretical") return BoundMode::theoretical;
  if (name == "effective") return BoundMode::effective;
  throw InvalidArgument("unknown bound mode '" + name + "'");
}

std::size_t required_bursts(std::size_t s, std::size_t N, double eps, BoundMode mode, double c) {
  if (s < 1 || N <= s) throw InvalidArgument("bound needs 1 <= s < N");
  if (!(c > 0.0)) throw InvalidArgument("bound constant must be positive");
  const double base = c * static_cast<double>(s) * std::log(static_cast<double>(N));
  if (mode == BoundMode::effective) return static_cast<std::size_t>(std::ceil(base));
  if (!(eps > 0.0) || eps > 1.0) throw InvalidArgument("failure probability must lie in (0, 1]");
  return static_cast<std::size_t>(std::ceil(9.0 * base * std::log(1.0 / eps)));
}

RecoveryConfig with_seed(RecoveryConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  if (cfg.noise) cfg.noise->seed = derive_seed(seed, {0x6e6f697365ULL});
  return cfg;
}

bool run_success_trial(const RecoveryConfig& cfg, std::uint64_t seed) {
  try {
    const auto result = run_recovery(with_seed(cfg, seed));
    return std::all_of(result.components.begin(), result.components.end(),
                       [](const ComponentResult& c) { return c.success && c.solver_converged; });
  } catch (const IntegrationFailure&) {
    return false;
  }
}

MinBurstsScan scan_min_bursts(RecoveryConfig cfg, std::size_t trials, std::size_t start, std::size_t cap) {
  if (trials < 1) throw InvalidArgument("scan needs at least one trial per K");
  MinBurstsScan scan;
  const std::uint64_t master = cfg.seed;
  for (std::size_t K = std::max<std::size_t>(start, 1); K <= cap; ++K) {
    cfg.bursts = K;
    ScanStep step{K, 0, 0};
    for (std::size_t t = 0; t < trials; ++t) {
      ++step.attempted;
      if (!run_success_trial(cfg, derive_seed(master, {K, t}))) break;
      ++step.successes;
    }
    scan.history.push_back(step);
    if (step.successes == trials) {
      scan.min_bursts = K;
      break;
    }
  }
  return scan;
}

}  // namespace dynrec
