#include "chainimp/data.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace chainimp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  if (end == begin || errno == ERANGE) return false;
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0';
}

ColKind infer_kind(const Eigen::MatrixXd& values, const BoolMask& present,
                   Eigen::Index j) {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (!present(i, j)) continue;
    const double v = values(i, j);
    if (v != 0.0 && v != 1.0) return ColKind::continuous;
  }
  return ColKind::binary;
}

}  // namespace

Eigen::Index DataMatrix::col_index(std::string_view name) const {
  for (std::size_t j = 0; j < col_names.size(); ++j) {
    if (col_names[j] == name) return static_cast<Eigen::Index>(j);
  }
  throw std::invalid_argument("DataMatrix: no column named '" + std::string(name) + "'");
}

void DataMatrix::validate() const {
  const Eigen::Index n = values.rows();
  const Eigen::Index p = values.cols();
  if (present.rows() != n || present.cols() != p)
    throw std::invalid_argument("DataMatrix: values and present shapes differ");
  if (static_cast<Eigen::Index>(col_names.size()) != p ||
      static_cast<Eigen::Index>(col_kinds.size()) != p)
    throw std::invalid_argument("DataMatrix: column metadata length mismatch");
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!present(i, j)) {
        if (!std::isnan(values(i, j)))
          throw std::invalid_argument("DataMatrix: missing cell lacks NaN sentinel");
        continue;
      }
      if (std::isnan(values(i, j)))
        throw std::invalid_argument("DataMatrix: present cell holds NaN");
      if (col_kinds[j] == ColKind::binary) {
        const double v = values(i, j);
        if (v != 0.0 && v != 1.0)
          throw std::invalid_argument("DataMatrix: binary column '" + col_names[j] +
                                      "' holds a non-0/1 value");
      }
    }
  }
}

DataMatrix DataMatrix::from_values(Eigen::MatrixXd values,
                                   std::vector<std::string> col_names) {
  DataMatrix dm;
  dm.present = BoolMask::Constant(values.rows(), values.cols(), true);
  dm.values = std::move(values);
  dm.col_names = std::move(col_names);
  dm.col_kinds.resize(dm.values.cols());
  for (Eigen::Index j = 0; j < dm.values.cols(); ++j)
    dm.col_kinds[j] = infer_kind(dm.values, dm.present, j);
  dm.validate();
  return dm;
}

DataMatrix load_csv(const std::string& path,
                    const std::map<std::string, ColKind>& kind_overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("load_csv: '" + path + "' is empty");
  const std::vector<std::string> names = split_csv_line(line);
  const std::size_t p = names.size();

  std::vector<double> flat;
  std::vector<bool> flat_present;
  std::size_t n = 0;
  std::size_t row_index = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty() && in.eof()) break;  // trailing newline
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != p) {
      throw ParseError("load_csv: ragged row " + std::to_string(row_index) + " in '" +
                       path + "' (expected " + std::to_string(p) + " cells, got " +
                       std::to_string(cells.size()) + ")");
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (cells[j] == "NA") {
        flat.push_back(kNaN);
        flat_present.push_back(false);
        continue;
      }
      double v;
      if (!parse_double(cells[j], v) || !std::isfinite(v)) {
        throw ParseError("load_csv: non-numeric cell at row " + std::to_string(row_index) +
                         ", column " + std::to_string(j + 1) + " in '" + path + "': '" +
                         cells[j] + "'");
      }
      flat.push_back(v);
      flat_present.push_back(true);
    }
    ++n;
  }

  DataMatrix dm;
  dm.col_names = names;
  dm.values.resize(n, p);
  dm.present.resize(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      dm.values(i, j) = flat[i * p + j];
      dm.present(i, j) = flat_present[i * p + j];
    }
  }
  dm.col_kinds.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto it = kind_overrides.find(names[j]);
    dm.col_kinds[j] = it != kind_overrides.end()
                          ? it->second
                          : infer_kind(dm.values, dm.present, static_cast<Eigen::Index>(j));
  }
  dm.validate();
  return dm;
}

void write_csv(const DataMatrix& dm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_csv: cannot open '" + path + "' for writing");
  for (std::size_t j = 0; j < dm.col_names.size(); ++j) {
    if (j) out << ',';
    out << dm.col_names[j];
  }
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < dm.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < dm.n_cols(); ++j) {
      if (j) out << ',';
      if (!dm.present(i, j)) {
        out << "NA";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", dm.values(i, j));
        out << buf;
      }
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("write_csv: write failed for '" + path + "'");
}

DataMatrix mcar_mask(const DataMatrix& dm, double rate, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("mcar_mask: rate must be in [0, 1)");
  if (!dm.fully_observed())
    throw std::invalid_argument("mcar_mask: input must be fully observed");
  DataMatrix out = dm;
  for (Eigen::Index i = 0; i < out.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < out.n_cols(); ++j) {
      if (rng.uniform() < rate) {
        out.present(i, j) = false;
        out.values(i, j) = kNaN;
      }
    }
  }
  return out;
}

DataMatrix bivariate_pattern(const BivariatePattern& pat, const DataMatrix& dm) {
  if (dm.n_cols() != 2)
    throw std::invalid_argument("bivariate_pattern: matrix must have exactly 2 columns");
  if (pat.n_a < 0 || pat.n_b < 0 || pat.n_c < 0)
    throw std::invalid_argument("bivariate_pattern: block sizes must be nonnegative");
  if (dm.n_rows() != pat.n_rows())
    throw std::invalid_argument("bivariate_pattern: row count does not match n_a + n_b + n_c");
  if (!dm.fully_observed())
    throw std::invalid_argument("bivariate_pattern: input must be fully observed");
  DataMatrix out = dm;
  for (Eigen::Index i = pat.n_a; i < pat.n_a + pat.n_b; ++i) {
    out.present(i, 1) = false;
    out.values(i, 1) = kNaN;
  }
  for (Eigen::Index i = pat.n_a + pat.n_b; i < pat.n_rows(); ++i) {
    out.present(i, 0) = false;
    out.values(i, 0) = kNaN;
  }
  return out;
}

std::vector<Eigen::Index> iota_set(const DataMatrix& dm, Eigen::Index j) {
  if (j < 0 || j >= dm.n_cols())
    throw std::invalid_argument("iota_set: column index out of range");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < dm.n_rows(); ++i) {
    if (dm.present(i, j)) continue;
    bool rest_observed = true;
    for (Eigen::Index k = 0; k < dm.n_cols(); ++k) {
      if (k != j && !dm.present(i, k)) {
        rest_observed = false;
        break;
      }
    }
    if (rest_observed) rows.push_back(i);
  }
  return rows;
}

}  // namespace chainimp
