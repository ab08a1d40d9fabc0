#include "dynrec/sparse_solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "dynrec/errors.hpp"

namespace dynrec {

void BpdnConfig::validate() const {
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
  if (max_outer < 1 || max_inner < 1) throw InvalidArgument("iteration caps must be positive");
  if (!(tol_residual > 0.0) || !(tol_gap > 0.0)) throw InvalidArgument("solver tolerances must be positive");
}

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double tau) {
  if (tau < 0.0) throw InvalidArgument("l1 ball radius must be non-negative");
  if (v.lpNorm<1>() <= tau) return v;
  if (tau == 0.0) return Eigen::VectorXd::Zero(v.size());

  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(mags.begin(), mags.end(), std::greater<>());

  // Soft-threshold level: theta = (sum of the k largest - tau) / k for the
  // largest k whose k-th magnitude still exceeds it.
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumsum += mags[k];
    const double candidate = (cumsum - tau) / static_cast<double>(k + 1);
    if (mags[k] > candidate) {
      theta = candidate;
    } else {
      break;
    }
  }
  Eigen::VectorXd w(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double shrunk = std::abs(v(i)) - theta;
    w(i) = shrunk > 0.0 ? std::copysign(shrunk, v(i)) : 0.0;
  }
  return w;
}

double residual_floor(const Eigen::VectorXd& b) { return 1e-10 * b.norm(); }

namespace {

constexpr double kStepMin = 1e-16;
constexpr double kStepMax = 1e5;
constexpr double kArmijo = 1e-4;
constexpr int kHistory = 3;
constexpr int kMaxLineSearch = 12;
constexpr double kDecreaseTol = 1e-4;
constexpr double kLeastSquaresTol = 1e-6;
constexpr double kGapFraction = 0.1;

// A x, skipping zero entries of x when it is sparse.
Eigen::VectorXd apply(const Eigen::MatrixXd& A, const Eigen::VectorXd& x) {
  Eigen::Index nnz = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) nnz += x(j) != 0.0;
  if (3 * nnz >= x.size()) return A * x;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(A.rows());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) != 0.0) y.noalias() += x(j) * A.col(j);
  }
  return y;
}

enum class Mode { lasso, bpdn };

struct SpgOutcome {
  Eigen::VectorXd x;
  double tau = 0.0;
  double residual_norm = 0.0;
  double dual_norm = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
  int newton_steps = 0;
  bool converged = false;
  std::vector<ParetoPoint> pareto;
};

class SpectralProjectedGradient {
 public:
  SpectralProjectedGradient(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const BpdnConfig& cfg)
      : A_(A), b_(b), cfg_(cfg), b_norm_(b.norm()) {}

  SpgOutcome run(Mode mode, double tau, const Eigen::VectorXd& x0) {
    SpgOutcome out;
    const double sigma = cfg_.sigma;
    const double floor = 1e-10 * b_norm_;
    const double band_lo = sigma - std::max(cfg_.tol_residual * sigma, floor);
    const double band_hi = sigma > 0.0 ? sigma * (1.0 + cfg_.tol_residual) : floor;

    set_point(project_l1_ball(x0, tau));
    std::deque<double> history(1, f_);
    double f_old = f_;
    double scale = initial_scale(tau);
    int inner = 0;
    bool tau_just_updated = false;
    // Set when the line search can make no further progress at this tau.
    bool exhausted = false;

    for (;;) {
      const double r_norm = r_.norm();
      const double g_norm = g_.lpNorm<Eigen::Infinity>();
      const double gap = r_.dot(r_ - b_) + tau * g_norm;
      const double rel_gap = std::abs(gap) / std::max(1.0, f_);
      out.residual_norm = r_norm;
      out.dual_norm = g_norm;
      out.relative_gap = rel_gap;

      if (mode == Mode::lasso) {
        if (rel_gap <= cfg_.tol_gap || r_norm <= floor) {
          out.converged = true;
          break;
        }
      } else {
        if (r_norm >= band_lo && r_norm <= band_hi) {
          out.converged = true;
          break;
        }
        if (g_norm <= kLeastSquaresTol * r_norm && r_norm > band_hi) {
          // Least-squares residual reached without meeting sigma.
          break;
        }
        const double a_error = r_norm - sigma;
        const double r_error2 = std::abs(f_ - sigma * sigma / 2.0) / std::max(1.0, f_);
        const double change = std::abs(f_ - f_old);
        const bool stalled = (change <= kDecreaseTol * f_ && r_norm > 2.0 * sigma) ||
                             (change <= 0.1 * f_ * std::abs(a_error) && r_norm <= 2.0 * sigma);
        // The gap must be small against the distance to the target so that
        // the dual bound below is close to the iterate's residual.
        const bool solved = rel_gap <= std::max(cfg_.tol_gap, kGapFraction * r_error2);
        // Increases of tau use the dual lower bound on the optimal residual:
        // an inexact iterate overstates phi(tau), and an overshoot past the
        // root is nearly irrecoverable when sigma is tiny.
        const double dual_f = b_.dot(r_) - 0.5 * r_norm * r_norm - tau * g_norm;
        const double r_lower = std::sqrt(2.0 * std::max(0.0, dual_f));
        const bool capped = inner >= cfg_.max_inner || exhausted;
        const bool uncertain = a_error > 0.0 && r_lower <= sigma && !capped;
        if ((solved || (stalled && !tau_just_updated) || capped) && g_norm > 0.0 && !uncertain) {
          if (out.newton_steps >= cfg_.max_outer) break;
          out.pareto.push_back({tau, r_norm});
          const double previous = tau;
          const double r_used = exhausted ? r_norm : r_lower;
          const double step = a_error > 0.0 ? std::max(r_used - sigma, 0.0) * r_norm / g_norm
                                            : r_norm * a_error / g_norm;
          exhausted = false;
          tau = std::max(0.0, tau + step);
          ++out.newton_steps;
          inner = 0;
          tau_just_updated = true;
          if (tau < previous) set_point(project_l1_ball(x_, tau));
          history.assign(1, f_);
          f_old = f_;
          continue;
        }
      }
      if (inner >= cfg_.max_inner) break;

      tau_just_updated = false;
      f_old = f_;
      const double f_max = *std::max_element(history.begin(), history.end());
      const Eigen::VectorXd x_prev = x_;
      const Eigen::VectorXd g_prev = g_;
      if (!curvilinear_search(tau, scale, f_max) && !linear_search(tau, scale, f_max)) {
        // No progress possible along either search path; restart the scaling
        // once, then (for BPDN) accept this tau's iterate and move tau.
        if (scale == 1.0) {
          if (mode == Mode::lasso || tau_just_updated || exhausted) break;
          exhausted = true;
          continue;
        }
        scale = 1.0;
        ++inner;
        ++out.iterations;
        continue;
      }
      ++inner;
      ++out.iterations;

      history.push_back(f_);
      if (static_cast<int>(history.size()) > kHistory) history.pop_front();

      const Eigen::VectorXd s = x_ - x_prev;
      const Eigen::VectorXd y = g_ - g_prev;
      const double sts = s.squaredNorm();
      const double sty = s.dot(y);
      scale = sty <= 0.0 ? kStepMax : std::clamp(sts / sty, kStepMin, kStepMax);
    }

    out.x = x_;
    out.tau = tau;
    out.residual_norm = r_.norm();
    return out;
  }

 private:
  void set_point(Eigen::VectorXd x) {
    x_ = std::move(x);
    r_ = b_ - apply(A_, x_);
    f_ = 0.5 * r_.squaredNorm();
    g_ = -(A_.transpose() * r_);
  }

  double initial_scale(double tau) const {
    const double dx = (project_l1_ball(x_ - g_, tau) - x_).lpNorm<Eigen::Infinity>();
    if (dx < 1.0 / kStepMax) return kStepMax;
    return std::clamp(1.0 / dx, kStepMin, kStepMax);
  }

  bool accept(Eigen::VectorXd x_new, Eigen::VectorXd r_new, double f_new) {
    x_ = std::move(x_new);
    r_ = std::move(r_new);
    f_ = f_new;
    g_ = -(A_.transpose() * r_);
    return true;
  }

  // Backtracks along the projection arc P(x - step * scale * g).
  bool curvilinear_search(double tau, double scale, double f_max) {
    double step = 1.0;
    for (int k = 0; k < kMaxLineSearch; ++k) {
      Eigen::VectorXd x_new = project_l1_ball(x_ - (step * scale) * g_, tau);
      const Eigen::VectorXd d = x_new - x_;
      const double gtd = g_.dot(d);
      if (!(gtd < 0.0)) return false;
      Eigen::VectorXd r_new = b_ - apply(A_, x_new);
      const double f_new = 0.5 * r_new.squaredNorm();
      if (f_new <= f_max + kArmijo * gtd) return accept(std::move(x_new), std::move(r_new), f_new);
      step *= 0.5;
    }
    return false;
  }

  // Backtracks along the feasible segment towards P(x - scale * g).
  bool linear_search(double tau, double scale, double f_max) {
    const Eigen::VectorXd d = project_l1_ball(x_ - scale * g_, tau) - x_;
    const double gtd = g_.dot(d);
    if (!(gtd < 0.0)) return false;
    const Eigen::VectorXd Ad = apply(A_, d);
    double step = 1.0;
    for (int k = 0; k < kMaxLineSearch; ++k) {
      Eigen::VectorXd r_new = r_ - step * Ad;
      const double f_new = 0.5 * r_new.squaredNorm();
      if (f_new <= f_max + kArmijo * step * gtd) {
        return accept(x_ + step * d, std::move(r_new), f_new);
      }
      // Safeguarded quadratic interpolation of f along the segment.
      const double curvature = Ad.squaredNorm();
      const double trial = curvature > 0.0 ? -gtd / curvature : 0.5 * step;
      step = std::clamp(trial, 0.1 * step, 0.5 * step);
    }
    return false;
  }

  const Eigen::MatrixXd& A_;
  const Eigen::VectorXd& b_;
  BpdnConfig cfg_;
  double b_norm_;
  Eigen::VectorXd x_, r_, g_;
  double f_ = 0.0;
};

void check_system(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != b.size()) throw ShapeError("matrix rows and right-hand side length differ");
}

}  // namespace

LassoResult solve_lasso(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tau, const BpdnConfig& cfg,
                        const Eigen::VectorXd* warm_start) {
  cfg.validate();
  check_system(A, b);
  if (tau < 0.0) throw InvalidArgument("tau must be non-negative");
  const Eigen::VectorXd x0 = warm_start ? *warm_start : Eigen::VectorXd::Zero(A.cols());
  if (x0.size() != A.cols()) throw ShapeError("warm start length does not match matrix columns");

  SpectralProjectedGradient spg(A, b, cfg);
  auto outcome = spg.run(Mode::lasso, tau, x0);
  LassoResult result;
  result.x = std::move(outcome.x);
  result.residual_norm = outcome.residual_norm;
  result.dual_norm = outcome.dual_norm;
  result.relative_gap = outcome.relative_gap;
  result.iterations = outcome.iterations;
  result.converged = outcome.converged;
  return result;
}

BpdnResult solve_bpdn(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const BpdnConfig& cfg) {
  cfg.validate();
  check_system(A, b);
  BpdnResult result;
  const double b_norm = b.norm();
  if (b_norm == 0.0 || (cfg.sigma > 0.0 && cfg.sigma >= b_norm)) {
    result.x = Eigen::VectorXd::Zero(A.cols());
    result.residual_norm = b_norm;
    result.converged = true;
    return result;
  }

  SpectralProjectedGradient spg(A, b, cfg);
  auto outcome = spg.run(Mode::bpdn, 0.0, Eigen::VectorXd::Zero(A.cols()));
  result.x = std::move(outcome.x);
  result.residual_norm = outcome.residual_norm;
  result.tau = outcome.tau;
  result.newton_steps = outcome.newton_steps;
  result.iterations = outcome.iterations;
  result.converged = outcome.converged;
  result.pareto = std::move(outcome.pareto);
  return result;
}

Eigen::VectorXd min_norm_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  check_system(A, b);
  if (A.size() == 0) return Eigen::VectorXd::Zero(A.cols());
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return cod.solve(b);
}

Eigen::VectorXd sequential_threshold_ls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double lambda,
                                        int max_iters) {
  if (!(lambda > 0.0)) throw InvalidArgument("threshold must be positive");
  check_system(A, b);
  std::vector<Eigen::Index> active(static_cast<std::size_t>(A.cols()));
  for (Eigen::Index j = 0; j < A.cols(); ++j) active[static_cast<std::size_t>(j)] = j;

  Eigen::VectorXd c = Eigen::VectorXd::Zero(A.cols());
  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd local = min_norm_least_squares(A(Eigen::all, active), b);
    c.setZero();
    std::vector<Eigen::Index> kept;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double value = local(static_cast<Eigen::Index>(k));
      c(active[k]) = value;
      if (std::abs(value) >= lambda) kept.push_back(active[k]);
    }
    if (kept.size() == active.size()) return c;
    if (kept.empty()) return Eigen::VectorXd::Zero(A.cols());
    active = std::move(kept);
  }
  // Iteration cap reached with a still-shrinking set: refit on what remains.
  const Eigen::VectorXd local = min_norm_least_squares(A(Eigen::all, active), b);
  c.setZero();
  for (std::size_t k = 0; k < active.size(); ++k) c(active[k]) = local(static_cast<Eigen::Index>(k));
  return c;
}

DebiasResult debias(const Eigen::MatrixXd& restricted, const Eigen::VectorXd& b) {
  check_system(restricted, b);
  DebiasResult result;
  if (restricted.cols() == 0) {
    result.coeffs = Eigen::VectorXd();
    return result;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(restricted);
  result.coeffs = cod.solve(b);
  result.full_rank = cod.rank() == restricted.cols();
  return result;
}

std::vector<std::size_t> support_of(const Eigen::VectorXd& coeffs, double tau_supp) {
  if (tau_supp < 0.0) throw InvalidArgument("support threshold must be non-negative");
  std::vector<std::size_t> support;
  const double peak = coeffs.size() ? coeffs.lpNorm<Eigen::Infinity>() : 0.0;
  if (peak == 0.0) return support;
  const double cut = tau_supp * peak;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    if (std::abs(coeffs(i)) > cut) support.push_back(static_cast<std::size_t>(i));
  }
  return support;
}

}  // namespace dynrec
