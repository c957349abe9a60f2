#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "chainimp/data.hpp"

using namespace chainimp;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

DataMatrix random_matrix(Eigen::Index n, Eigen::Index p, double missing_rate,
                         RngStream& rng) {
  Eigen::MatrixXd v(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) v(i, j) = rng.normal();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("c" + std::to_string(j));
  DataMatrix dm = DataMatrix::from_values(std::move(v), std::move(names));
  if (missing_rate > 0.0) dm = mcar_mask(dm, missing_rate, rng);
  return dm;
}

}  // namespace

TEST_CASE("load_csv parses values, NA, and kinds") {
  const fs::path p = temp_file("chainimp_basic.csv");
  write_text(p, "a,b,flag\n1.5,2,0\nNA,3.25,1\n-0.5,4,0\n");
  const DataMatrix dm = load_csv(p.string());
  CHECK(dm.n_rows() == 3);
  CHECK(dm.n_cols() == 3);
  CHECK(dm.col_names == std::vector<std::string>{"a", "b", "flag"});

  int missing = 0;
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      if (!dm.present(i, j)) ++missing;
  CHECK(missing == 1);
  CHECK_FALSE(dm.present(1, 0));
  CHECK(std::isnan(dm.values(1, 0)));
  CHECK(dm.values(0, 0) == 1.5);

  CHECK(dm.col_kinds[0] == ColKind::continuous);
  CHECK(dm.col_kinds[1] == ColKind::continuous);
  CHECK(dm.col_kinds[2] == ColKind::binary);
}

TEST_CASE("binary inference is overridable by schema") {
  const fs::path p = temp_file("chainimp_kinds.csv");
  write_text(p, "f\n0\n1\n1\n");
  CHECK(load_csv(p.string()).col_kinds[0] == ColKind::binary);
  const DataMatrix dm = load_csv(p.string(), {{"f", ColKind::continuous}});
  CHECK(dm.col_kinds[0] == ColKind::continuous);
}

TEST_CASE("load_csv ragged row error carries the row index") {
  const fs::path p = temp_file("chainimp_ragged.csv");
  write_text(p, "a,b\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(load_csv(p.string()), doctest::Contains("row 3"), ParseError);
}

TEST_CASE("load_csv non-numeric token error carries coordinates") {
  const fs::path p = temp_file("chainimp_token.csv");
  write_text(p, "a,b\n1,2\n3,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(p.string()), doctest::Contains("row 3, column 2"),
                       ParseError);
  // The NA token is case-sensitive, and non-finite literals are rejected.
  write_text(p, "a\nna\n");
  CHECK_THROWS_AS(load_csv(p.string()), ParseError);
  write_text(p, "a\nnan\n");
  CHECK_THROWS_AS(load_csv(p.string()), ParseError);
  write_text(p, "a\ninf\n");
  CHECK_THROWS_AS(load_csv(p.string()), ParseError);
}

TEST_CASE("write_csv emits the NA token and errors on bad paths") {
  RngStream rng(1);
  DataMatrix dm = random_matrix(4, 2, 0.4, rng);
  const fs::path p = temp_file("chainimp_na.csv");
  write_csv(dm, p.string());
  std::ifstream in(p);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bool any_missing = !dm.fully_observed();
  CHECK(any_missing == (text.find("NA") != std::string::npos));

  CHECK_THROWS_AS(write_csv(dm, "/nonexistent_dir_zz/x.csv"), IoError);
}

TEST_CASE("csv round trip reproduces values and mask exactly") {
  RngStream rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    DataMatrix dm = random_matrix(30, 4, rep % 2 == 0 ? 0.3 : 0.0, rng);
    const fs::path p = temp_file("chainimp_roundtrip.csv");
    write_csv(dm, p.string());
    const DataMatrix back = load_csv(p.string());
    REQUIRE(back.n_rows() == dm.n_rows());
    REQUIRE(back.n_cols() == dm.n_cols());
    CHECK(back.col_names == dm.col_names);
    for (Eigen::Index i = 0; i < dm.n_rows(); ++i) {
      for (Eigen::Index j = 0; j < dm.n_cols(); ++j) {
        CHECK(back.present(i, j) == dm.present(i, j));
        if (dm.present(i, j)) CHECK(back.values(i, j) == dm.values(i, j));
      }
    }
  }
}

TEST_CASE("mcar_mask zero rate changes nothing") {
  RngStream rng(3);
  DataMatrix dm = random_matrix(50, 3, 0.0, rng);
  const DataMatrix masked = mcar_mask(dm, 0.0, rng);
  CHECK(masked.present.all());
  CHECK(masked.values == dm.values);
}

TEST_CASE("mcar_mask per-column counts match binomial moments") {
  RngStream rng(4);
  DataMatrix dm = random_matrix(1000, 8, 0.0, rng);
  const DataMatrix masked = mcar_mask(dm, 0.3, rng);
  const double mean = 1000 * 0.3;
  const double sd = std::sqrt(1000 * 0.3 * 0.7);  // ~14.5
  for (Eigen::Index j = 0; j < 8; ++j) {
    long missing = 0;
    for (Eigen::Index i = 0; i < 1000; ++i)
      if (!masked.present(i, j)) ++missing;
    CHECK(std::abs(static_cast<double>(missing) - mean) < 4.0 * sd);
  }
  // Values under the mask are untouched where present.
  for (Eigen::Index i = 0; i < 1000; ++i)
    for (Eigen::Index j = 0; j < 8; ++j)
      if (masked.present(i, j)) CHECK(masked.values(i, j) == dm.values(i, j));
}

TEST_CASE("mcar_mask is deterministic given the seed") {
  RngStream rng(5);
  DataMatrix dm = random_matrix(100, 3, 0.0, rng);
  RngStream a(77), b(77);
  const DataMatrix ma = mcar_mask(dm, 0.25, a);
  const DataMatrix mb = mcar_mask(dm, 0.25, b);
  CHECK((ma.present == mb.present).all());
}

TEST_CASE("mcar_mask rejects rate >= 1 and partial inputs") {
  RngStream rng(6);
  DataMatrix dm = random_matrix(10, 2, 0.0, rng);
  CHECK_THROWS_AS(mcar_mask(dm, 1.0, rng), std::invalid_argument);
  const DataMatrix masked = mcar_mask(dm, 0.5, rng);
  if (!masked.fully_observed())
    CHECK_THROWS_AS(mcar_mask(masked, 0.1, rng), std::invalid_argument);
}

TEST_CASE("disjoint substreams give independent masks") {
  RngStream rng(7);
  DataMatrix dm = random_matrix(1000, 8, 0.0, rng);
  RngStream base(123);
  RngStream s1 = base.fork("mask-one");
  RngStream s2 = base.fork("mask-two");
  const DataMatrix m1 = mcar_mask(dm, 0.3, s1);
  const DataMatrix m2 = mcar_mask(dm, 0.3, s2);

  // 2x2 contingency table of cell missingness indicators.
  double table[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < dm.n_rows(); ++i)
    for (Eigen::Index j = 0; j < dm.n_cols(); ++j)
      table[m1.present(i, j) ? 0 : 1][m2.present(i, j) ? 0 : 1] += 1.0;
  const double n = 1000.0 * 8.0;
  double chi2 = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double row = table[a][0] + table[a][1];
      const double col = table[0][b] + table[1][b];
      const double expect = row * col / n;
      chi2 += (table[a][b] - expect) * (table[a][b] - expect) / expect;
    }
  }
  // 1 df chi-square: p > 0.001 iff stat < 10.83.
  CHECK(chi2 < 10.83);
}

TEST_CASE("bivariate_pattern produces the three-block layout") {
  RngStream rng(8);
  DataMatrix dm = random_matrix(360, 2, 0.0, rng);
  const DataMatrix out = bivariate_pattern({200, 80, 80}, dm);
  long complete = 0, missing_y = 0, missing_x = 0;
  for (Eigen::Index i = 0; i < 360; ++i) {
    if (out.present(i, 0) && out.present(i, 1)) ++complete;
    if (out.present(i, 0) && !out.present(i, 1)) ++missing_y;
    if (!out.present(i, 0) && out.present(i, 1)) ++missing_x;
  }
  CHECK(complete == 200);
  CHECK(missing_y == 80);
  CHECK(missing_x == 80);
}

TEST_CASE("bivariate_pattern degenerate and minimal cases") {
  RngStream rng(9);
  DataMatrix full = random_matrix(10, 2, 0.0, rng);
  CHECK(bivariate_pattern({10, 0, 0}, full).fully_observed());

  DataMatrix tiny = random_matrix(2, 2, 0.0, rng);
  const DataMatrix out = bivariate_pattern({0, 1, 1}, tiny);
  CHECK(out.present(0, 0));
  CHECK_FALSE(out.present(0, 1));
  CHECK_FALSE(out.present(1, 0));
  CHECK(out.present(1, 1));

  CHECK_THROWS_AS(bivariate_pattern({5, 1, 1}, tiny), std::invalid_argument);
}

TEST_CASE("iota_set finds rows missing only column j") {
  RngStream rng(10);
  DataMatrix dm = random_matrix(360, 2, 0.0, rng);
  const DataMatrix pat = bivariate_pattern({200, 80, 80}, dm);

  const auto iota2 = iota_set(pat, 1);
  CHECK(iota2.size() == 80);
  for (Eigen::Index r : iota2) {
    CHECK(r >= 200);
    CHECK(r < 280);
  }
  CHECK(iota_set(dm, 0).empty());  // fully observed

  // A row missing both columns belongs to neither iota set.
  DataMatrix both = pat;
  both.present(0, 0) = false;
  both.present(0, 1) = false;
  both.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  both.values(0, 1) = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index r : iota_set(both, 0)) CHECK(r != 0);
  for (Eigen::Index r : iota_set(both, 1)) CHECK(r != 0);

  // Subset property: every row in iota_j is missing column j.
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index r : iota_set(both, j)) CHECK_FALSE(both.present(r, j));
}

TEST_CASE("validate rejects broken invariants") {
  RngStream rng(11);
  DataMatrix dm = random_matrix(5, 2, 0.0, rng);
  DataMatrix bad = dm;
  bad.present(0, 0) = false;  // present=false but value not NaN
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  DataMatrix bin = dm;
  bin.col_kinds[0] = ColKind::binary;
  CHECK_THROWS_AS(bin.validate(), std::invalid_argument);
}
