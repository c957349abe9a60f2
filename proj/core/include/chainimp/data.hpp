#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "chainimp/errors.hpp"
#include "chainimp/rng.hpp"

namespace chainimp {

using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class ColKind { continuous, binary };

/// n x p numeric table with a per-cell presence mask. The mask is
/// authoritative: cells with present=false hold NaN as a sentinel and must
/// never be read as values. Immutable after construction by convention, so
/// it can be shared read-only across chains; chains mutate private copies.
struct DataMatrix {
  std::vector<std::string> col_names;
  std::vector<ColKind> col_kinds;
  Eigen::MatrixXd values;  // NaN where present is false
  BoolMask present;

  Eigen::Index n_rows() const { return values.rows(); }
  Eigen::Index n_cols() const { return values.cols(); }

  bool fully_observed() const { return present.all(); }

  /// Index of a named column; throws std::invalid_argument if absent.
  Eigen::Index col_index(std::string_view name) const;

  /// Checks the structural invariants (shapes agree, binary cells are 0/1,
  /// missing cells carry the NaN sentinel). Throws std::invalid_argument.
  void validate() const;

  /// Fully observed matrix with inferred column kinds (binary iff every
  /// value is 0 or 1).
  static DataMatrix from_values(Eigen::MatrixXd values,
                                std::vector<std::string> col_names);
};

/// The three-block bivariate missingness layout: n_a complete rows, then
/// n_b rows missing variable 2, then n_c rows missing variable 1. No row
/// misses both variables.
struct BivariatePattern {
  Eigen::Index n_a = 0;
  Eigen::Index n_b = 0;
  Eigen::Index n_c = 0;

  Eigen::Index n_rows() const { return n_a + n_b + n_c; }
};

/// Reads a comma-separated file with a header row. Cells are numeric
/// literals or the token NA (case-sensitive). Column kind is inferred as
/// binary iff all present values are 0 or 1; kind_overrides wins where set.
DataMatrix load_csv(const std::string& path,
                    const std::map<std::string, ColKind>& kind_overrides = {});

/// Writes CSV with NA for missing cells, LF line endings, and up to 17
/// significant digits so a round trip reproduces values and mask exactly.
void write_csv(const DataMatrix& dm, const std::string& path);

/// Each cell of a fully observed matrix is independently set missing with
/// probability rate in [0, 1). Values are unchanged; only presence flags move.
DataMatrix mcar_mask(const DataMatrix& dm, double rate, RngStream& rng);

/// Applies the three-block bivariate pattern to a fully observed two-column
/// matrix whose row count matches the pattern.
DataMatrix bivariate_pattern(const BivariatePattern& pat, const DataMatrix& dm);

/// Rows where column j is missing and every other column is present.
std::vector<Eigen::Index> iota_set(const DataMatrix& dm, Eigen::Index j);

}  // namespace chainimp
