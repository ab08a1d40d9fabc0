#include "dynrec/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "dynrec/errors.hpp"

namespace dynrec {

namespace {

const double kSqrt3 = std::sqrt(3.0);
const double kSqrt5 = std::sqrt(5.0);

// Number of quadratic pairs (a, b), a <= b, with a < i.
std::size_t pairs_before(std::size_t i, std::size_t n) { return i * n - i * (i - 1) / 2; }

std::size_t wrap(long index, std::size_t n) {
  const long size = static_cast<long>(n);
  return static_cast<std::size_t>(((index % size) + size) % size);
}

class PositionIndex {
 public:
  PositionIndex(std::span<const Column> columns, std::size_t n) : n_(n) {
    map_.reserve(columns.size() * 2);
    for (std::size_t k = 0; k < columns.size(); ++k) map_.emplace(column_position(columns[k], n), k);
  }

  std::size_t at(const Column& column) const {
    auto it = map_.find(column_position(column, n_));
    if (it == map_.end()) {
      throw InvalidArgument("column set is not closed under the basis map: missing " + term_name(column));
    }
    return it->second;
  }

 private:
  std::size_t n_;
  std::unordered_map<std::size_t, std::size_t> map_;
};

std::size_t infer_dimension(std::span<const Column> columns) {
  std::size_t n = 0;
  for (const auto& c : columns) {
    if (c.kind != Column::Kind::constant) n = std::max(n, c.second + 1);
  }
  return std::max<std::size_t>(n, 1);
}

}  // namespace

std::string to_string(Basis basis) { return basis == Basis::monomial ? "monomial" : "legendre"; }

Basis basis_from_string(const std::string& name) {
  if (name == "monomial") return Basis::monomial;
  if (name == "legendre") return Basis::legendre;
  throw InvalidArgument("unknown basis '" + name + "'");
}

Column Column::quadratic(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return {Kind::quadratic, i, j};
}

std::string term_name(const Column& column) {
  switch (column.kind) {
    case Column::Kind::constant:
      return "1";
    case Column::Kind::linear:
      return "x" + std::to_string(column.first + 1);
    case Column::Kind::quadratic:
      if (column.first == column.second) return "x" + std::to_string(column.first + 1) + "^2";
      return "x" + std::to_string(column.first + 1) + "*x" + std::to_string(column.second + 1);
  }
  return {};
}

std::size_t num_columns(std::size_t n) { return (n * n + 3 * n + 2) / 2; }

std::size_t column_position(const Column& column, std::size_t n) {
  switch (column.kind) {
    case Column::Kind::constant:
      return 0;
    case Column::Kind::linear:
      return 1 + column.first;
    case Column::Kind::quadratic:
      return 1 + n + pairs_before(column.first, n) + (column.second - column.first);
  }
  return 0;
}

Column column_at(std::size_t position, std::size_t n) {
  if (position >= num_columns(n)) throw InvalidArgument("column position out of range");
  if (position == 0) return Column::constant();
  if (position <= n) return Column::linear(position - 1);
  const std::size_t q = position - 1 - n;
  // Largest i with pairs_before(i) <= q.
  std::size_t lo = 0, hi = n - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    if (pairs_before(mid, n) <= q) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return Column::quadratic(lo, lo + (q - pairs_before(lo, n)));
}

std::vector<Column> full_columns(std::size_t n) {
  std::vector<Column> columns;
  columns.reserve(num_columns(n));
  columns.push_back(Column::constant());
  for (std::size_t i = 0; i < n; ++i) columns.push_back(Column::linear(i));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) columns.push_back(Column::quadratic(i, j));
  }
  return columns;
}

std::vector<Column> localized_columns(std::size_t component, std::size_t ell, std::size_t n) {
  if (ell % 2 == 0) throw InvalidArgument("localization window must be odd");
  if (ell < 1 || ell > n) throw InvalidArgument("localization window must satisfy 1 <= ell <= n");
  if (component >= n) throw InvalidArgument("component index out of range");
  const long half = static_cast<long>(ell - 1) / 2;
  std::vector<std::size_t> window;
  for (long d = -half; d <= half; ++d) window.push_back(wrap(static_cast<long>(component) + d, n));
  std::sort(window.begin(), window.end());

  std::vector<Column> columns;
  columns.reserve(num_columns(ell));
  columns.push_back(Column::constant());
  for (auto i : window) columns.push_back(Column::linear(i));
  for (std::size_t a = 0; a < window.size(); ++a) {
    for (std::size_t b = a; b < window.size(); ++b) columns.push_back(Column::quadratic(window[a], window[b]));
  }
  return columns;
}

double evaluate_column(const Column& column, Basis basis, std::span<const double> x) {
  switch (column.kind) {
    case Column::Kind::constant:
      return 1.0;
    case Column::Kind::linear:
      return basis == Basis::monomial ? x[column.first] : kSqrt3 * x[column.first];
    case Column::Kind::quadratic: {
      const double xi = x[column.first];
      if (column.first == column.second) {
        return basis == Basis::monomial ? xi * xi : kSqrt5 * (3.0 * xi * xi - 1.0) / 2.0;
      }
      const double prod = xi * x[column.second];
      return basis == Basis::monomial ? prod : 3.0 * prod;
    }
  }
  return 0.0;
}

namespace {

Eigen::VectorXd full_row(std::span<const double> x, Basis basis) {
  const std::size_t n = x.size();
  Eigen::VectorXd row(static_cast<Eigen::Index>(num_columns(n)));
  Eigen::Index p = 0;
  row(p++) = 1.0;
  for (std::size_t i = 0; i < n; ++i) row(p++) = evaluate_column(Column::linear(i), basis, x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) row(p++) = evaluate_column(Column::quadratic(i, j), basis, x);
  }
  return row;
}

}  // namespace

Eigen::VectorXd monomial_row(std::span<const double> x) { return full_row(x, Basis::monomial); }
Eigen::VectorXd legendre_row(std::span<const double> x) { return full_row(x, Basis::legendre); }

Eigen::VectorXd change_basis(const Eigen::VectorXd& coeffs, Basis from, Basis to,
                             std::span<const Column> columns) {
  if (static_cast<std::size_t>(coeffs.size()) != columns.size()) {
    throw ShapeError("coefficient vector does not match column list");
  }
  if (from == to) return coeffs;
  const PositionIndex index(columns, infer_dimension(columns));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coeffs.size());
  const bool to_legendre = to == Basis::legendre;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const double a = coeffs(static_cast<Eigen::Index>(k));
    if (a == 0.0) continue;
    const Column& col = columns[k];
    const auto kk = static_cast<Eigen::Index>(k);
    switch (col.kind) {
      case Column::Kind::constant:
        out(kk) += a;
        break;
      case Column::Kind::linear:
        out(kk) += to_legendre ? a / kSqrt3 : a * kSqrt3;
        break;
      case Column::Kind::quadratic:
        if (col.first != col.second) {
          out(kk) += to_legendre ? a / 3.0 : a * 3.0;
        } else {
          // x^2 = 1/3 + 2/(3 sqrt5) P2(x), P2(x) = sqrt5 (3x^2 - 1)/2
          const auto c0 = static_cast<Eigen::Index>(index.at(Column::constant()));
          if (to_legendre) {
            out(kk) += a * 2.0 / (3.0 * kSqrt5);
            out(c0) += a / 3.0;
          } else {
            out(kk) += a * 3.0 * kSqrt5 / 2.0;
            out(c0) -= a * kSqrt5 / 2.0;
          }
        }
        break;
    }
  }
  return out;
}

Eigen::VectorXd change_basis(const Eigen::VectorXd& coeffs, Basis from, Basis to, std::size_t n) {
  const auto columns = full_columns(n);
  return change_basis(coeffs, from, to, columns);
}

AffineTransform::AffineTransform(Eigen::VectorXd lo, Eigen::VectorXd hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size() || lo_.size() == 0) throw ShapeError("transform bounds must be non-empty and equal length");
  if (((hi_ - lo_).array() <= 0.0).any()) throw InvalidArgument("transform box must have hi > lo in every coordinate");
  scale_ = 2.0 / (hi_ - lo_).array();
  offset_ = -((hi_ + lo_).array() / (hi_ - lo_).array());
}

AffineTransform AffineTransform::uniform(std::size_t n, double lo, double hi) {
  const auto size = static_cast<Eigen::Index>(n);
  return AffineTransform(Eigen::VectorXd::Constant(size, lo), Eigen::VectorXd::Constant(size, hi));
}

bool AffineTransform::is_identity() const {
  return (scale_.array() == 1.0).all() && (offset_.array() == 0.0).all();
}

Eigen::VectorXd AffineTransform::forward(const Eigen::VectorXd& x) const {
  if (x.size() != lo_.size()) throw ShapeError("state dimension does not match transform");
  return (scale_.array() * x.array() + offset_.array()).matrix();
}

Eigen::MatrixXd AffineTransform::forward_rows(const Eigen::MatrixXd& states) const {
  if (states.cols() != lo_.size()) throw ShapeError("state dimension does not match transform");
  Eigen::MatrixXd out = states;
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = (scale_(j) * out.col(j).array() + offset_(j)).matrix();
  return out;
}

Eigen::VectorXd pullback_affine(const Eigen::VectorXd& coeffs, std::span<const Column> columns,
                                const AffineTransform& transform, std::size_t component) {
  if (static_cast<std::size_t>(coeffs.size()) != columns.size()) {
    throw ShapeError("coefficient vector does not match column list");
  }
  const std::size_t n = transform.dimension();
  if (component >= n) throw InvalidArgument("component index out of range");
  const PositionIndex index(columns, n);
  const auto at = [&](const Column& c) { return static_cast<Eigen::Index>(index.at(c)); };

  Eigen::VectorXd out = Eigen::VectorXd::Zero(coeffs.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const double c = coeffs(static_cast<Eigen::Index>(k));
    if (c == 0.0) continue;
    const Column& col = columns[k];
    switch (col.kind) {
      case Column::Kind::constant:
        out(static_cast<Eigen::Index>(k)) += c;
        break;
      case Column::Kind::linear: {
        const auto i = col.first;
        out(static_cast<Eigen::Index>(k)) += c * transform.scale(i);
        out(at(Column::constant())) += c * transform.offset(i);
        break;
      }
      case Column::Kind::quadratic: {
        // c (a_i x_i + d_i)(a_j x_j + d_j)
        const auto i = col.first, j = col.second;
        const double ai = transform.scale(i), di = transform.offset(i);
        const double aj = transform.scale(j), dj = transform.offset(j);
        out(static_cast<Eigen::Index>(k)) += c * ai * aj;
        out(at(Column::linear(i))) += c * ai * dj;
        out(at(Column::linear(j))) += c * di * aj;
        out(at(Column::constant())) += c * di * dj;
        break;
      }
    }
  }
  return out / transform.scale(component);
}

std::string to_string(RowSelection rows) {
  return rows == RowSelection::all_samples ? "all-samples" : "initial-only";
}

RowSelection row_selection_from_string(const std::string& name) {
  if (name == "all-samples") return RowSelection::all_samples;
  if (name == "initial-only") return RowSelection::initial_only;
  throw InvalidArgument("unknown row selection '" + name + "'");
}

StackedData stack_bursts(std::span<const Burst> bursts, RowSelection rows) {
  if (bursts.empty()) throw ShapeError("no bursts to assemble");
  const auto n = bursts.front().states.cols();
  const auto m = bursts.front().states.rows();
  for (const auto& b : bursts) {
    if (b.states.cols() != n || b.states.rows() != m) throw ShapeError("bursts differ in shape");
    if (!b.velocities) throw IncompleteBurst("burst " + std::to_string(b.index) + " has no velocities");
    if (b.velocities->rows() != m || b.velocities->cols() != n) {
      throw ShapeError("velocities of burst " + std::to_string(b.index) + " do not match its states");
    }
  }
  const Eigen::Index per_burst = rows == RowSelection::all_samples ? m : 1;
  const auto total = static_cast<Eigen::Index>(bursts.size()) * per_burst;

  StackedData data;
  data.states.resize(total, n);
  data.velocities.resize(total, n);
  data.rows.reserve(static_cast<std::size_t>(total));
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < bursts.size(); ++k) {
    data.states.middleRows(r, per_burst) = bursts[k].states.topRows(per_burst);
    data.velocities.middleRows(r, per_burst) = bursts[k].velocities->topRows(per_burst);
    for (Eigen::Index i = 0; i < per_burst; ++i) data.rows.push_back({k, static_cast<std::size_t>(i)});
    r += per_burst;
  }
  return data;
}

Eigen::MatrixXd evaluate_dictionary(const Eigen::MatrixXd& states, Basis basis, std::span<const Column> columns) {
  const auto rows = states.rows();
  Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(columns.size()));
  // Row-major copy so each sample is a contiguous span.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = states;
  const auto n = static_cast<std::size_t>(states.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::span<const double> xr(x.row(r).data(), n);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      values(r, static_cast<Eigen::Index>(k)) = evaluate_column(columns[k], basis, xr);
    }
  }
  return values;
}

AssembledDictionary assemble_dictionary(const StackedData& data, Basis basis, std::span<const Column> columns,
                                        const std::optional<AffineTransform>& transform) {
  const auto n = static_cast<std::size_t>(data.states.cols());
  AssembledDictionary out;
  auto& dict = out.dictionary;
  dict.basis = basis;
  dict.rows = data.rows;
  dict.frame = transform;
  if (columns.empty()) {
    dict.columns = full_columns(n);
  } else {
    dict.columns.assign(columns.begin(), columns.end());
  }
  for (const auto& c : dict.columns) {
    if (c.kind != Column::Kind::constant && c.second >= n) throw ShapeError("column refers to a missing variable");
  }
  out.velocities = data.velocities;
  if (transform) {
    if (transform->dimension() != n) throw ShapeError("transform dimension does not match data");
    dict.values = evaluate_dictionary(transform->forward_rows(data.states), basis, dict.columns);
    for (std::size_t j = 0; j < n; ++j) out.velocities.col(static_cast<Eigen::Index>(j)) *= transform->scale(j);
  } else {
    dict.values = evaluate_dictionary(data.states, basis, dict.columns);
  }
  return out;
}

AssembledDictionary assemble_dictionary(std::span<const Burst> bursts, Basis basis, std::span<const Column> columns,
                                        RowSelection rows, const std::optional<AffineTransform>& transform) {
  return assemble_dictionary(stack_bursts(bursts, rows), basis, columns, transform);
}

}  // namespace dynrec
