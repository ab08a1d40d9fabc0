#include "dynrec/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "dynrec/errors.hpp"
#include "dynrec/parallel.hpp"
#include "dynrec/random.hpp"

namespace dynrec {

std::size_t QuadraticModel::sparsity(std::size_t j) const {
  std::size_t count = 0;
  for (Eigen::SparseMatrix<double>::InnerIterator it(coeffs, static_cast<Eigen::Index>(j)); it; ++it) {
    if (it.value() != 0.0) ++count;
  }
  return count;
}

Eigen::VectorXd QuadraticModel::component(std::size_t j) const {
  return Eigen::VectorXd(coeffs.col(static_cast<Eigen::Index>(j)));
}

SystemSpec SystemSpec::custom(QuadraticModel model) {
  const auto n = model.n;
  return {std::move(model), n};
}

void SystemSpec::validate() const {
  if (std::holds_alternative<Lorenz96>(kind) && n <= 3) {
    throw InvalidSystem("Lorenz 96 requires more than 3 variables");
  }
  if (std::holds_alternative<Fisher>(kind) && n < 3) {
    throw InvalidSystem("Fisher system requires at least 3 variables");
  }
  if (n == 0) throw InvalidSystem("system dimension must be positive");
}

std::string to_string(VelocitySource source) {
  switch (source) {
    case VelocitySource::exact_observed:
      return "exact-observed";
    case VelocitySource::finite_difference:
      return "finite-difference";
    case VelocitySource::fine_step_fd:
      return "fine-step-fd";
  }
  return {};
}

VelocitySource velocity_source_from_string(const std::string& name) {
  if (name == "exact-observed") return VelocitySource::exact_observed;
  if (name == "finite-difference") return VelocitySource::finite_difference;
  if (name == "fine-step-fd") return VelocitySource::fine_step_fd;
  throw InvalidArgument("unknown velocity mode '" + name + "'");
}

Eigen::VectorXd lorenz96_rhs(const Eigen::VectorXd& x, double forcing) {
  const Eigen::Index n = x.size();
  if (n <= 3) throw InvalidSystem("Lorenz 96 requires more than 3 variables");
  Eigen::VectorXd dx(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double xm2 = x((k + n - 2) % n);
    const double xm1 = x((k + n - 1) % n);
    const double xp1 = x((k + 1) % n);
    dx(k) = -xm2 * xm1 + xm1 * xp1 - x(k) + forcing;
  }
  return dx;
}

Eigen::VectorXd fisher_rhs(const Eigen::VectorXd& x, double gamma) {
  const Eigen::Index n = x.size();
  if (n < 3) throw InvalidSystem("Fisher system requires at least 3 variables");
  Eigen::VectorXd dx(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double xm1 = x((k + n - 1) % n);
    const double xp1 = x((k + 1) % n);
    dx(k) = xp1 - 2.0 * x(k) + xm1 + gamma * (x(k) - x(k) * x(k));
  }
  return dx;
}

QuadraticModel true_model(const SystemSpec& spec) {
  if (const auto* model = std::get_if<QuadraticModel>(&spec.kind)) return *model;
  spec.validate();
  const std::size_t n = spec.n;
  std::vector<Eigen::Triplet<double>> entries;
  auto add = [&](const Column& c, std::size_t j, double v) {
    if (v != 0.0) {
      entries.emplace_back(static_cast<int>(column_position(c, n)), static_cast<int>(j), v);
    }
  };
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t prev2 = (j + n - 2) % n, prev = (j + n - 1) % n, next = (j + 1) % n;
    if (const auto* l96 = std::get_if<Lorenz96>(&spec.kind)) {
      add(Column::constant(), j, l96->forcing);
      add(Column::linear(j), j, -1.0);
      add(Column::quadratic(prev2, prev), j, -1.0);
      add(Column::quadratic(prev, next), j, 1.0);
    } else {
      const double gamma = std::get<Fisher>(spec.kind).gamma;
      add(Column::linear(prev), j, 1.0);
      add(Column::linear(j), j, -2.0 + gamma);
      add(Column::linear(next), j, 1.0);
      add(Column::quadratic(j, j), j, -gamma);
    }
  }
  QuadraticModel model;
  model.n = n;
  model.coeffs.resize(static_cast<Eigen::Index>(num_columns(n)), static_cast<Eigen::Index>(n));
  model.coeffs.setFromTriplets(entries.begin(), entries.end());
  model.coeffs.makeCompressed();
  return model;
}

Eigen::VectorXd quadratic_rhs(const QuadraticModel& model, const Eigen::VectorXd& x) {
  if (model.basis != Basis::monomial || model.frame) {
    throw InvalidArgument("quadratic_rhs needs a monomial model in original coordinates");
  }
  if (static_cast<std::size_t>(x.size()) != model.n) throw ShapeError("state dimension does not match model");
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index j = 0; j < model.coeffs.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(model.coeffs, j); it; ++it) {
      const Column c = column_at(static_cast<std::size_t>(it.row()), model.n);
      dx(j) += it.value() * evaluate_column(c, Basis::monomial, xs);
    }
  }
  return dx;
}

Rhs system_rhs(const SystemSpec& spec) {
  spec.validate();
  if (const auto* l96 = std::get_if<Lorenz96>(&spec.kind)) {
    const double forcing = l96->forcing;
    return [forcing](const Eigen::VectorXd& x) { return lorenz96_rhs(x, forcing); };
  }
  if (const auto* fisher = std::get_if<Fisher>(&spec.kind)) {
    const double gamma = fisher->gamma;
    return [gamma](const Eigen::VectorXd& x) { return fisher_rhs(x, gamma); };
  }
  const auto model = std::get<QuadraticModel>(spec.kind);
  return [model](const Eigen::VectorXd& x) { return quadratic_rhs(model, x); };
}

namespace {

// Dormand-Prince 5(4) tableau; the node column is unused because every
// right-hand side here is autonomous.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
// Difference between the 5th and embedded 4th order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1, double tol) {
  const auto scale = tol + tol * y0.array().abs().max(y1.array().abs());
  return std::sqrt((err.array() / scale).square().mean());
}

double initial_step(const Rhs& rhs, const Eigen::VectorXd& y, const Eigen::VectorXd& f0, double tol) {
  const auto scale = (tol + tol * y.array().abs()).eval();
  const double d0 = std::sqrt((y.array() / scale).square().mean());
  const double d1 = std::sqrt((f0.array() / scale).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  const Eigen::VectorXd f1 = rhs(y + h0 * f0);
  const double d2 = std::sqrt(((f1 - f0).array() / scale).square().mean()) / h0;
  const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min(100.0 * h0, h1);
}

}  // namespace

Eigen::MatrixXd integrate_rk45(const Rhs& rhs, const Eigen::VectorXd& x0, double t0, double dt_out,
                               std::size_t m, const Rk45Options& options) {
  if (!(dt_out > 0.0)) throw InvalidArgument("output spacing must be positive");
  if (m < 1) throw InvalidArgument("at least one output sample is required");
  if (!(options.tol > 0.0)) throw InvalidArgument("tolerance must be positive");

  const Eigen::Index n = x0.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m), n);
  out.row(0) = x0.transpose();
  if (m == 1) return out;

  Eigen::VectorXd y = x0;
  Eigen::VectorXd k1 = rhs(y);
  double t = t0;
  double h = std::min(initial_step(rhs, y, k1, options.tol), dt_out);
  double err_old = 1e-4;
  long steps = 0;

  Eigen::VectorXd k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y_new(n), err(n);
  for (std::size_t i = 1; i < m; ++i) {
    const double target = t0 + static_cast<double>(i) * dt_out;
    while (t < target) {
      const double remaining = target - t;
      const bool clipped = h >= remaining;
      const double step = clipped ? remaining : h;
      if (step < options.min_step * std::max(1.0, std::abs(t)) || ++steps > options.max_steps) {
        throw IntegrationFailure("RK45 step size underflow", t);
      }

      k2 = rhs(y + step * (a21 * k1));
      k3 = rhs(y + step * (a31 * k1 + a32 * k2));
      k4 = rhs(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = rhs(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = rhs(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y_new = y + step * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      k7 = rhs(y_new);
      err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double e = error_norm(err, y, y_new, options.tol);
      if (!std::isfinite(e) || !y_new.allFinite()) e = 1e10;

      if (e <= 1.0) {
        t = clipped ? target : t + step;
        y = y_new;
        k1 = k7;
        double factor = kSafety * std::pow(std::max(e, 1e-10), -kExpo) * std::pow(err_old, kBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        err_old = std::max(e, 1e-4);
        // A clipped step says nothing about the natural step length.
        if (!clipped || step * factor > h) h = step * factor;
      } else {
        const double factor = std::max(kMinFactor, kSafety * std::pow(e, -kExpo));
        h = step * factor;
      }
    }
    out.row(static_cast<Eigen::Index>(i)) = y.transpose();
  }
  return out;
}

std::vector<Burst> generate_bursts(const SystemSpec& spec, const BurstOptions& options) {
  spec.validate();
  if (options.bursts < 1) throw InvalidArgument("at least one burst is required");
  if (options.samples < 1) throw InvalidArgument("at least one sample per burst is required");
  if (options.velocity_source == VelocitySource::finite_difference && options.samples < 3) {
    throw InsufficientSamples("finite-difference velocities need at least 3 samples per burst");
  }
  if (!(options.init.hi > options.init.lo)) throw InvalidArgument("initialization box must have hi > lo");

  const Rhs rhs = system_rhs(spec);
  const Rhs reversed = [&rhs](const Eigen::VectorXd& x) { return Eigen::VectorXd(-rhs(x)); };
  const double dt_fine = options.dt_fine > 0.0 ? options.dt_fine : options.dt / 100.0;
  const Rk45Options rk{options.tol};
  const auto n = static_cast<Eigen::Index>(spec.n);

  std::vector<Burst> bursts(options.bursts);
  parallel_for(options.bursts, [&](std::size_t k) {
    auto engine = make_stream(options.seed, {k});
    std::uniform_real_distribution<double> uniform(options.init.lo, options.init.hi);
    Eigen::VectorXd x0(n);
    for (Eigen::Index i = 0; i < n; ++i) x0(i) = uniform(engine);

    Burst burst;
    burst.index = k;
    burst.t0 = 0.0;
    burst.dt = options.dt;
    burst.velocity_source = options.velocity_source;
    try {
      burst.states = integrate_rk45(rhs, x0, 0.0, options.dt, options.samples, rk);
      const auto m = burst.states.rows();
      if (options.velocity_source == VelocitySource::exact_observed) {
        Eigen::MatrixXd v(m, n);
        for (Eigen::Index i = 0; i < m; ++i) v.row(i) = rhs(burst.states.row(i).transpose()).transpose();
        burst.velocities = std::move(v);
      } else if (options.velocity_source == VelocitySource::fine_step_fd) {
        Eigen::MatrixXd v(m, n), error(m, n);
        for (Eigen::Index i = 0; i < m; ++i) {
          const Eigen::VectorXd xi = burst.states.row(i).transpose();
          const Eigen::MatrixXd ahead = integrate_rk45(rhs, xi, 0.0, dt_fine, 3, rk);
          const Eigen::MatrixXd behind = integrate_rk45(reversed, xi, 0.0, dt_fine, 3, rk);
          const Eigen::RowVectorXd fine = (ahead.row(1) - behind.row(1)) / (2.0 * dt_fine);
          const Eigen::RowVectorXd coarse = (ahead.row(2) - behind.row(2)) / (4.0 * dt_fine);
          v.row(i) = fine;
          error.row(i) = (coarse - fine) / 3.0;
        }
        burst.velocities = std::move(v);
        burst.velocity_error = std::move(error);
      }
    } catch (const IntegrationFailure& failure) {
      throw IntegrationFailure("integration failed in burst " + std::to_string(k) + ": " + failure.what(),
                               failure.last_time(), static_cast<long>(k));
    }
    bursts[k] = std::move(burst);
  });
  return bursts;
}

}  // namespace dynrec
