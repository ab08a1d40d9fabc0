#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dynrec {

enum class Basis { monomial, legendre };

std::string to_string(Basis basis);
Basis basis_from_string(const std::string& name);

/// One trial function of the quadratic dictionary. Variable indices are
/// zero-based; for quadratic terms first <= second.
struct Column {
  enum class Kind { constant, linear, quadratic };

  Kind kind = Kind::constant;
  std::size_t first = 0;
  std::size_t second = 0;

  static Column constant() { return {}; }
  static Column linear(std::size_t i) { return {Kind::linear, i, i}; }
  static Column quadratic(std::size_t i, std::size_t j);

  friend bool operator==(const Column&, const Column&) = default;
};

/// Human-readable term name with one-based variables: "1", "x3", "x1^2", "x2*x50".
std::string term_name(const Column& column);

/// Number of monomials of n variables up to degree two, (n^2 + 3n + 2) / 2.
std::size_t num_columns(std::size_t n);

/// Position of a column in the canonical order: constant, x_1..x_n, then
/// x_i x_j for i <= j in lexicographic order.
std::size_t column_position(const Column& column, std::size_t n);
Column column_at(std::size_t position, std::size_t n);

/// All columns in canonical order.
std::vector<Column> full_columns(std::size_t n);

/// Columns involving only variables in the periodic window of odd width `ell`
/// centred on `component`, kept in canonical order.
std::vector<Column> localized_columns(std::size_t component, std::size_t ell, std::size_t n);

/// Evaluates one trial function at x.
double evaluate_column(const Column& column, Basis basis, std::span<const double> x);

Eigen::VectorXd monomial_row(std::span<const double> x);

/// Tensorized orthonormal Legendre polynomials (uniform probability measure
/// on [-1,1]): 1, sqrt(3) x_i, sqrt(5)(3 x_i^2 - 1)/2, 3 x_i x_j.
Eigen::VectorXd legendre_row(std::span<const double> x);

/// Re-expresses coefficients of a quadratic polynomial in another basis.
/// `columns` must contain the constant column whenever it contains a squared
/// term, since the squares of the two bases differ by a constant.
Eigen::VectorXd change_basis(const Eigen::VectorXd& coeffs, Basis from, Basis to,
                             std::span<const Column> columns);
Eigen::VectorXd change_basis(const Eigen::VectorXd& coeffs, Basis from, Basis to, std::size_t n);

/// Coordinate-wise map of the box [lo, hi] onto [-1, 1].
class AffineTransform {
 public:
  AffineTransform(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static AffineTransform uniform(std::size_t n, double lo, double hi);

  std::size_t dimension() const { return static_cast<std::size_t>(lo_.size()); }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }

  /// Slope 2/(hi - lo) of coordinate i; also the chain factor dy_i/dx_i.
  double scale(std::size_t i) const { return scale_(static_cast<Eigen::Index>(i)); }
  double offset(std::size_t i) const { return offset_(static_cast<Eigen::Index>(i)); }
  bool is_identity() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Applies the forward map to every row of a states matrix.
  Eigen::MatrixXd forward_rows(const Eigen::MatrixXd& states) const;

 private:
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  Eigen::VectorXd scale_;
  Eigen::VectorXd offset_;
};

/// Given monomial coefficients of g fitted to dy_j/dt in the unit-box frame,
/// returns monomial coefficients of f_j(x) = g(forward(x)) / scale(j) in the
/// original frame. `columns` must be closed under the substitution (the full
/// set and localized windows are).
Eigen::VectorXd pullback_affine(const Eigen::VectorXd& coeffs, std::span<const Column> columns,
                                const AffineTransform& transform, std::size_t component);

}  // namespace dynrec
