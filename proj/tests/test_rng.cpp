#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "chainimp/rng.hpp"

using namespace chainimp;

TEST_CASE("same seed and path replays the same sequence") {
  RngStream a(42);
  RngStream b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c = RngStream(7).fork("chain").fork(std::uint64_t{3});
  RngStream d = RngStream(7).fork("chain").fork(std::uint64_t{3});
  for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("distinct labels give distinct streams") {
  RngStream base(1);
  RngStream a = base.fork("alpha");
  RngStream b = base.fork("beta");
  int equal = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal == 0);
}

TEST_CASE("save/restore resumes the exact sequence") {
  RngStream a(99);
  for (int i = 0; i < 17; ++i) a.next_u64();
  const RngStream::Saved saved = a.save();
  std::vector<double> ahead;
  for (int i = 0; i < 50; ++i) ahead.push_back(a.normal());
  RngStream b = RngStream::restore(saved);
  for (int i = 0; i < 50; ++i) CHECK(b.normal() == ahead[static_cast<std::size_t>(i)]);
}

TEST_CASE("uniform moments") {
  RngStream rng(5);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  // SE of the mean is 1/sqrt(12 n) ~ 0.0009; allow 4 sigma.
  CHECK(std::abs(sum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal moments") {
  RngStream rng(6);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sum2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("psd_cholesky accuracy and degenerate input") {
  Eigen::MatrixXd m(3, 3);
  m << 4.0, 2.0, 0.4, 2.0, 3.0, 0.1, 0.4, 0.1, 1.5;
  const Eigen::MatrixXd L = psd_cholesky(m);
  const double err = (L * L.transpose() - m).cwiseAbs().maxCoeff();
  CHECK(err <= 1e-8 * m.cwiseAbs().maxCoeff());

  // Zero matrix is PSD with zero factor.
  const Eigen::MatrixXd z = psd_cholesky(Eigen::MatrixXd::Zero(2, 2));
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);

  // Rank-1 PSD matrix.
  Eigen::MatrixXd r1(2, 2);
  r1 << 1.0, 1.0, 1.0, 1.0;
  const Eigen::MatrixXd Lr = psd_cholesky(r1);
  CHECK((Lr * Lr.transpose() - r1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("psd_cholesky rejects indefinite matrices naming the minor") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  CHECK_THROWS_WITH_AS(psd_cholesky(bad), doctest::Contains("leading minor 2"),
                       NumericError);
}

TEST_CASE("draw_mvn degenerate covariance returns the mean exactly") {
  RngStream rng(7);
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 0.5;
  const Eigen::VectorXd draw = draw_mvn(mean, Eigen::MatrixXd::Zero(3, 3), rng);
  CHECK(draw == mean);
}

TEST_CASE("draw_mvn sample covariance approaches identity") {
  RngStream rng(8);
  const int n = 100000;
  const Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = draw_mvn(mean, cov, rng);
    sum += x * x.transpose();
    mean_acc += x;
  }
  const Eigen::MatrixXd sample_cov = sum / n - (mean_acc / n) * (mean_acc / n).transpose();
  CHECK((sample_cov - cov).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("draw_mvn rejects non-PSD covariance") {
  RngStream rng(9);
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(draw_mvn(Eigen::VectorXd::Zero(2), bad, rng), NumericError);
}

TEST_CASE("scaled inverse chi-square moments") {
  RngStream rng(10);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += draw_scaled_inv_chisq(10.0, 1.0, rng);
  // Mean df*scale/(df-2) = 1.25, variance 2 df^2 scale^2/((df-2)^2 (df-4)).
  const double mean = 10.0 / 8.0;
  const double var = 2.0 * 100.0 / (64.0 * 6.0);
  CHECK(std::abs(sum / n - mean) < 3.0 * std::sqrt(var / n));
}

TEST_CASE("scaled inverse chi-square argument errors") {
  RngStream rng(11);
  CHECK_THROWS_AS(draw_scaled_inv_chisq(10.0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(draw_scaled_inv_chisq(0.0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("scaled inverse chi-square determinism") {
  RngStream a(12), b(12);
  CHECK(draw_scaled_inv_chisq(5.0, 2.0, a) == draw_scaled_inv_chisq(5.0, 2.0, b));
}

TEST_CASE("inverse Wishart p=1 matches scaled inverse chi-square moments") {
  // IW(df, psi) with p = 1 is psi / chisq_df, i.e. scaled-inv-chisq(df, psi/df).
  RngStream rng(13);
  const int n = 100000;
  double sum = 0.0;
  Eigen::MatrixXd psi(1, 1);
  psi << 10.0;
  for (int i = 0; i < n; ++i) sum += draw_inv_wishart(10.0, psi, rng)(0, 0);
  const double mean = 10.0 / 8.0;  // psi/(df - 2) = mean of sichisq(10, 1)
  const double var = 2.0 * 100.0 / (64.0 * 6.0);
  CHECK(std::abs(sum / n - mean) < 3.0 * std::sqrt(var / n));
}

TEST_CASE("inverse Wishart mean matches scale/(df-p-1)") {
  RngStream rng(14);
  const int n = 100000;
  const Eigen::MatrixXd psi = 19.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) sum += draw_inv_wishart(20.0, psi, rng);
  const Eigen::MatrixXd expected = psi / (20.0 - 2.0 - 1.0);  // 19/17 I
  CHECK((sum / n - expected).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("inverse Wishart boundary df rejected") {
  RngStream rng(15);
  const Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(draw_inv_wishart(1.0, psi, rng), std::invalid_argument);  // df = p - 1
}

TEST_CASE("inverse Wishart output is SPD") {
  RngStream rng(16);
  Eigen::MatrixXd psi(3, 3);
  psi << 2.0, 0.5, 0.1, 0.5, 1.5, -0.2, 0.1, -0.2, 1.0;
  for (int i = 0; i < 200; ++i) {
    const Eigen::MatrixXd s = draw_inv_wishart(8.0, psi, rng);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_NOTHROW(psd_cholesky(s));
  }
}

TEST_CASE("bernoulli edge probabilities and moments") {
  RngStream rng(17);
  for (int i = 0; i < 100; ++i) CHECK(draw_bernoulli(0.0, rng) == 0);
  for (int i = 0; i < 100; ++i) CHECK(draw_bernoulli(1.0, rng) == 1);
  CHECK_THROWS_AS(draw_bernoulli(-0.1, rng), std::invalid_argument);
  CHECK_THROWS_AS(draw_bernoulli(1.1, rng), std::invalid_argument);

  const int n = 100000;
  long sum = 0;
  for (int i = 0; i < n; ++i) sum += draw_bernoulli(0.45, rng);
  const double se = std::sqrt(0.45 * 0.55 / n);
  CHECK(std::abs(static_cast<double>(sum) / n - 0.45) < 4.0 * se);
}

TEST_CASE("gamma moments at fractional shape") {
  RngStream rng(18);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.gamma(0.5);
  CHECK(std::abs(sum / n - 0.5) < 4.0 * std::sqrt(0.5 / n));
}
