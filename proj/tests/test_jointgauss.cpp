#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "chainimp/diagnostics.hpp"
#include "chainimp/experiments.hpp"
#include "chainimp/jointgauss.hpp"

using namespace chainimp;

TEST_CASE("bivariate parameter maps at reference points") {
  // Independence: slope 0, residual variance = marginal variance.
  const CondGaussSpec indep = t2_bivariate({0.0, 1.0, 0.0, 1.0, 0.0});
  CHECK(indep.intercept == 0.0);
  CHECK(indep.coefficients(0) == 0.0);
  CHECK(indep.residual_var == 1.0);

  // rho = 0.5 on unit variances: slope 0.5, residual 0.75.
  const CondGaussSpec half = t2_bivariate({0.0, 1.0, 0.0, 1.0, 0.5});
  CHECK(half.intercept == doctest::Approx(0.0));
  CHECK(half.coefficients(0) == doctest::Approx(0.5));
  CHECK(half.residual_var == doctest::Approx(0.75));

  // t1 is the x|y mirror.
  const CondGaussSpec t1 = t1_bivariate({1.0, 4.0, 2.0, 9.0, 0.3});
  CHECK(t1.coefficients(0) == doctest::Approx(0.3 * 2.0 / 3.0));
  CHECK(t1.intercept == doctest::Approx(1.0 - 0.3 * 2.0 / 3.0 * 2.0));
  CHECK(t1.residual_var == doctest::Approx((1.0 - 0.09) * 4.0));

  CHECK_THROWS_AS(t2_bivariate({0.0, 0.0, 0.0, 1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("(t2, t2_star) round trips through the inverse map") {
  const BivariateParams p{0.7, 2.25, -1.1, 5.5, -0.35};
  const CondGaussSpec cond = t2_bivariate(p);
  const auto [mu_x, s2x] = t2_star(p);
  const BivariateParams back = t2_joint_inverse(cond, mu_x, s2x);
  CHECK(std::abs(back.mu_x - p.mu_x) < 1e-12);
  CHECK(std::abs(back.sigma_x2 - p.sigma_x2) < 1e-12);
  CHECK(std::abs(back.mu_y - p.mu_y) < 1e-12);
  CHECK(std::abs(back.sigma_y2 - p.sigma_y2) < 1e-12);
  CHECK(std::abs(back.rho - p.rho) < 1e-12);
}

TEST_CASE("logit map nominal form at reference points") {
  const auto [a0, b0] = logit_compat_map(0.5, 0.0, 0.0, 1.0);
  CHECK(a0 == 0.0);
  CHECK(b0 == 0.0);

  const auto [a1, b1] = logit_compat_map(0.5, 0.0, 1.0, 1.0);
  CHECK(a1 == doctest::Approx(-0.5));
  CHECK(b1 == doctest::Approx(0.5));

  CHECK_THROWS_AS(logit_compat_map(0.0, 0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(logit_compat_map(0.5, 0.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("logit maps validated by a simulate-and-fit oracle") {
  // Simulate the two-block joint model and fit the logistic regression of
  // x1 on x2 by maximum likelihood; the exact conditional map must agree
  // within Monte Carlo error. The nominal form shares the intercept at
  // beta0 = 0 but its slope is off by a factor of two, which this oracle
  // documents.
  const double p = 0.5, beta0 = 0.0, beta1 = 1.0, sigma2 = 1.0;
  RngStream rng(41);
  const Eigen::Index n = 1000000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = static_cast<double>(draw_bernoulli(p, rng));
    const double x2 = beta0 + beta1 * x1 + std::sqrt(sigma2) * rng.normal();
    X(i, 0) = 1.0;
    X(i, 1) = x2;
    y(i) = x1;
  }
  const LogisticFit fit = logistic_fit(X, y);
  const Eigen::MatrixXd cov = fit.fisher_info.inverse();
  const double se_a = std::sqrt(cov(0, 0));
  const double se_b = std::sqrt(cov(1, 1));

  const auto [ea, eb] = logit_conditional_exact(p, beta0, beta1, sigma2);
  CHECK(std::abs(fit.beta_hat(0) - ea) < 4.0 * se_a);
  CHECK(std::abs(fit.beta_hat(1) - eb) < 4.0 * se_b);

  const auto [na, nb] = logit_compat_map(p, beta0, beta1, sigma2);
  CHECK(std::abs(fit.beta_hat(0) - na) < 4.0 * se_a);   // intercepts agree at beta0 = 0
  CHECK(std::abs(fit.beta_hat(1) - nb) > 50.0 * se_b);  // slope discrepancy is real
  CHECK(nb * 2.0 == doctest::Approx(eb));
}

TEST_CASE("exact logit map handles nonzero beta0") {
  // With beta0 != 0 the intercept picks up -beta0*beta1/sigma2.
  const double p = 0.3, beta0 = 0.7, beta1 = -1.2, sigma2 = 2.0;
  RngStream rng(42);
  const Eigen::Index n = 400000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = static_cast<double>(draw_bernoulli(p, rng));
    const double x2 = beta0 + beta1 * x1 + std::sqrt(sigma2) * rng.normal();
    X(i, 0) = 1.0;
    X(i, 1) = x2;
    y(i) = x1;
  }
  const LogisticFit fit = logistic_fit(X, y);
  const Eigen::MatrixXd cov = fit.fisher_info.inverse();
  const auto [ea, eb] = logit_conditional_exact(p, beta0, beta1, sigma2);
  CHECK(std::abs(fit.beta_hat(0) - ea) < 4.0 * std::sqrt(cov(0, 0)));
  CHECK(std::abs(fit.beta_hat(1) - eb) < 4.0 * std::sqrt(cov(1, 1)));
}

TEST_CASE("gaussian_mle matches hand moments") {
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 2.0, 3.0;
  const GaussParams p = gaussian_mle(x);
  CHECK(p.mu(0) == doctest::Approx(2.0));
  CHECK(p.sigma(0, 0) == doctest::Approx(2.0 / 3.0));  // ML divisor n
}

TEST_CASE("niw posterior moments for p = 1") {
  RngStream data_rng(43);
  const Eigen::Index n = 40;
  Eigen::MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = 2.0 + 1.5 * data_rng.normal();
  const double xbar = x.col(0).mean();
  const double s2 = (x.col(0).array() - xbar).square().sum() / static_cast<double>(n - 1);

  RngStream rng(44);
  const int draws = 100000;
  double sum_sigma = 0.0, sum_sigma2 = 0.0, sum_mu = 0.0;
  for (int d = 0; d < draws; ++d) {
    const GaussParams g = niw_posterior_draw(x, rng);
    sum_sigma += g.sigma(0, 0);
    sum_sigma2 += g.sigma(0, 0) * g.sigma(0, 0);
    sum_mu += g.mu(0);
  }
  // sigma2 | x ~ IW(n-1, (n-1)s^2): mean (n-1)s^2/(n-3).
  const double expect = (n - 1.0) * s2 / (n - 3.0);
  const double var_sigma = sum_sigma2 / draws - (sum_sigma / draws) * (sum_sigma / draws);
  CHECK(std::abs(sum_sigma / draws - expect) < 3.0 * std::sqrt(var_sigma / draws));
  // mu | x averages to xbar by the law of total expectation.
  const double mu_sd = std::sqrt(expect / n);
  CHECK(std::abs(sum_mu / draws - xbar) < 4.0 * mu_sd / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("niw rejects degenerate scatter and tiny samples") {
  RngStream rng(45);
  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) constant(i, 0) = rng.normal();
  CHECK_THROWS_AS(niw_posterior_draw(constant, rng), NumericError);

  Eigen::MatrixXd tiny = Eigen::MatrixXd::Random(4, 2);
  CHECK_THROWS_AS(niw_posterior_draw(tiny, rng), std::invalid_argument);
}

TEST_CASE("conditional_spec identity covariance and p = 2 consistency") {
  GaussParams p;
  p.mu = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
  p.sigma = Eigen::MatrixXd::Identity(3, 3);
  const CondGaussSpec c = conditional_spec(p, 1);
  CHECK(c.coefficients.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.residual_var == doctest::Approx(1.0));
  CHECK(c.intercept == doctest::Approx(-2.0));

  // p = 2 agrees with the closed-form bivariate map to 1e-12.
  const BivariateParams bp{0.3, 1.7, -0.4, 2.6, 0.45};
  GaussParams g2;
  g2.mu = (Eigen::VectorXd(2) << bp.mu_x, bp.mu_y).finished();
  const double cov = bp.rho * std::sqrt(bp.sigma_x2 * bp.sigma_y2);
  g2.sigma = (Eigen::MatrixXd(2, 2) << bp.sigma_x2, cov, cov, bp.sigma_y2).finished();
  const CondGaussSpec via_joint = conditional_spec(g2, 1);
  const CondGaussSpec via_map = t2_bivariate(bp);
  CHECK(std::abs(via_joint.intercept - via_map.intercept) < 1e-12);
  CHECK(std::abs(via_joint.coefficients(0) - via_map.coefficients(0)) < 1e-12);
  CHECK(std::abs(via_joint.residual_var - via_map.residual_var) < 1e-12);
}

TEST_CASE("conditional_spec p = 7 against brute-force block inversion") {
  const Eigen::Index p = 7;
  GaussParams g;
  g.mu = Eigen::VectorXd::LinSpaced(p, -1.0, 1.0);
  g.sigma = Eigen::MatrixXd::Constant(p, p, 0.4);
  g.sigma.diagonal().setOnes();

  for (Eigen::Index j = 0; j < p; ++j) {
    const CondGaussSpec c = conditional_spec(g, j);
    // Brute force: residual var = 1 / (Sigma^{-1})_{jj}, coefficients
    // -(Sigma^{-1})_{j,-j} / (Sigma^{-1})_{jj}.
    const Eigen::MatrixXd prec = g.sigma.inverse();
    CHECK(std::abs(c.residual_var - 1.0 / prec(j, j)) < 1e-10);
    Eigen::Index idx = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k == j) continue;
      CHECK(std::abs(c.coefficients(idx) + prec(j, k) / prec(j, j)) < 1e-10);
      ++idx;
    }
  }

  GaussParams singular = g;
  singular.sigma = Eigen::MatrixXd::Ones(p, p);
  CHECK_THROWS_AS(conditional_spec(singular, 0), NumericError);
}

namespace {

DataMatrix independent_bivariate(Eigen::Index n, RngStream& rng) {
  Eigen::MatrixXd v(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = rng.normal();
    v(i, 1) = rng.normal();
  }
  return DataMatrix::from_values(std::move(v), {"x", "y"});
}

}  // namespace

TEST_CASE("da_sweep leaves complete data untouched and refreshes parameters") {
  RngStream rng(46);
  const DataMatrix dm = independent_bivariate(60, rng);
  ChainState s = init_state(dm, rng);
  const Eigen::MatrixXd before = s.data;
  da_sweep(s, rng);
  CHECK(s.data == before);
  CHECK(s.joint_mu.size() == 2);
  CHECK(s.joint_sigma.rows() == 2);
  CHECK(s.iter == 1);
}

TEST_CASE("da_sweep preserves observed cells bitwise") {
  RngStream rng(47);
  DataMatrix dm = independent_bivariate(80, rng);
  dm = mcar_mask(dm, 0.3, rng);
  ChainState s = init_state(dm, rng);
  const Eigen::MatrixXd original = dm.values;
  for (int k = 0; k < 50; ++k) {
    da_sweep(s, rng);
    for (Eigen::Index i = 0; i < dm.n_rows(); ++i)
      for (Eigen::Index j = 0; j < 2; ++j)
        if (dm.present(i, j)) CHECK(s.data(i, j) == original(i, j));
  }
}

TEST_CASE("da_sweep stationary law matches the direct posterior predictive") {
  // Row 0 is fully missing, so it contributes nothing to the observed-data
  // posterior: the chain's stationary draw for that row is exactly the
  // posterior predictive of a new observation given the complete rows,
  // which an independent sampler can produce directly.
  RngStream rng(48);
  const Eigen::Index n = 150;
  DataMatrix dm = independent_bivariate(n, rng);
  dm.present(0, 0) = false;
  dm.present(0, 1) = false;
  dm.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
  dm.values(0, 1) = std::numeric_limits<double>::quiet_NaN();
  dm.validate();

  const int draws = 100000;
  // Chain route.
  RngStream chain_rng(49);
  ChainState s = init_state(dm, chain_rng);
  std::vector<double> chain_x;
  chain_x.reserve(draws);
  for (int k = 0; k < draws; ++k) {
    da_sweep(s, chain_rng);
    chain_x.push_back(s.data(0, 0));
  }

  // Oracle route: NIW posterior from the complete rows, then one draw of a
  // fresh row.
  Eigen::MatrixXd complete(n - 1, 2);
  for (Eigen::Index i = 1; i < n; ++i) complete.row(i - 1) = dm.values.row(i);
  RngStream oracle_rng(50);
  std::vector<double> oracle_x;
  oracle_x.reserve(draws);
  for (int k = 0; k < draws; ++k) {
    const GaussParams g = niw_posterior_draw(complete, oracle_rng);
    const Eigen::VectorXd row = draw_mvn(g.mu, g.sigma, oracle_rng);
    oracle_x.push_back(row(0));
  }

  const KsResult ks = ks_two_sample(chain_x, oracle_x);
  CHECK(ks.statistic < 0.01);
}

TEST_CASE("bivariate_gibbs_sweep matches the flat-prior iterative sweep bitwise") {
  RngStream rng(51);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp1(60, 25, 25, data_rng);
  const BivariatePattern pat{60, 25, 25};

  RngStream init_rng = rng.fork("init");
  ChainState sa = init_state(dm, init_rng);
  ChainState sb = sa;
  RngStream ra = rng.fork("sweeps");
  RngStream rb = ra;
  const auto specs = exp1_specs(LinearPrior::flat);
  for (int k = 0; k < 100; ++k) {
    iterative_sweep(sa, specs, ra);
    bivariate_gibbs_sweep(sb, pat, rb);
  }
  CHECK(std::memcmp(sa.data.data(), sb.data.data(),
                    sizeof(double) * static_cast<std::size_t>(sa.data.size())) == 0);
  CHECK(ra == rb);
}

TEST_CASE("bivariate_gibbs_sweep refreshes parameters when one column is complete") {
  RngStream rng(52);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp1(50, 0, 20, data_rng);  // no missing y
  ChainState s = init_state(dm, rng);
  const Eigen::VectorXd y_before = s.data.col(1);
  bivariate_gibbs_sweep(s, {50, 0, 20}, rng);
  CHECK(s.data.col(1) == y_before);
  CHECK(std::holds_alternative<LinearDraw>(s.draws[1]));
}

TEST_CASE("em on fully observed data is the closed-form MLE in one step") {
  RngStream rng(53);
  const DataMatrix dm = independent_bivariate(100, rng);
  const EmResult r = em_observed_mle_detailed(dm);
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  const GaussParams direct = gaussian_mle(dm.values);
  CHECK((r.params.mu - direct.mu).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((r.params.sigma - direct.sigma).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("em log-likelihood is monotone under the three-block pattern") {
  RngStream rng(54);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp1(200, 80, 80, data_rng);
  const EmResult r = em_observed_mle_detailed(dm);
  CHECK(r.converged);
  for (std::size_t i = 1; i < r.loglik_trace.size(); ++i)
    CHECK(r.loglik_trace[i] >=
          r.loglik_trace[i - 1] - 1e-8 * (1.0 + std::abs(r.loglik_trace[i - 1])));
}

TEST_CASE("em recovers zero correlation within sampling error") {
  RngStream rng(55);
  RngStream data_rng = rng.fork("data");
  const DataMatrix dm = gen_exp1(200, 80, 80, data_rng);
  const GaussParams p = em_observed_mle(dm);
  const double rho_hat = p.sigma(0, 1) / std::sqrt(p.sigma(0, 0) * p.sigma(1, 1));
  // Correlation information comes from the 200 complete rows: se ~ 1/sqrt(200).
  CHECK(std::abs(rho_hat) < 4.0 / std::sqrt(200.0));
}

TEST_CASE("em rejects non-identifiable patterns") {
  RngStream rng(56);
  DataMatrix dm = independent_bivariate(30, rng);
  for (Eigen::Index i = 0; i < 30; ++i) {
    dm.present(i, 1) = false;
    dm.values(i, 1) = std::numeric_limits<double>::quiet_NaN();
  }
  CHECK_THROWS_AS(em_observed_mle(dm), EstimationError);
}
