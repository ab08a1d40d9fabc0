#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynrec/basis.hpp"
#include "dynrec/dynamics.hpp"

namespace dynrec {

enum class RowSelection { all_samples, initial_only };

std::string to_string(RowSelection rows);
RowSelection row_selection_from_string(const std::string& name);

struct RowMeta {
  std::size_t burst = 0;
  std::size_t sample = 0;
};

/// Trial functions evaluated on data: rows are samples (burst-major, then
/// sample), columns follow `columns`. Immutable once assembled.
///
/// Values are held column-major: the solvers only ever touch whole columns
/// (A x with sparse x, and A^T r).
struct DictionaryMatrix {
  Eigen::MatrixXd values;
  Basis basis = Basis::legendre;
  std::vector<Column> columns;
  std::vector<RowMeta> rows;
  std::optional<AffineTransform> frame;

  Eigen::Index row_count() const { return values.rows(); }
  Eigen::Index column_count() const { return values.cols(); }
};

/// Burst data stacked vertically in original coordinates.
struct StackedData {
  Eigen::MatrixXd states;
  Eigen::MatrixXd velocities;
  std::vector<RowMeta> rows;
};

StackedData stack_bursts(std::span<const Burst> bursts, RowSelection rows);

/// Evaluates `columns` in `basis` on every row of `states`.
Eigen::MatrixXd evaluate_dictionary(const Eigen::MatrixXd& states, Basis basis, std::span<const Column> columns);

struct AssembledDictionary {
  DictionaryMatrix dictionary;
  /// Velocities aligned with the dictionary rows, multiplied by the chain
  /// factor of each coordinate when a transform is present.
  Eigen::MatrixXd velocities;
};

/// Builds the dictionary over `bursts`. States are mapped through `transform`
/// before evaluation; when `columns` is empty the full quadratic set is used.
AssembledDictionary assemble_dictionary(std::span<const Burst> bursts, Basis basis,
                                        std::span<const Column> columns = {},
                                        RowSelection rows = RowSelection::all_samples,
                                        const std::optional<AffineTransform>& transform = std::nullopt);

/// Same as above for data that is already stacked.
AssembledDictionary assemble_dictionary(const StackedData& data, Basis basis, std::span<const Column> columns = {},
                                        const std::optional<AffineTransform>& transform = std::nullopt);

}  // namespace dynrec
