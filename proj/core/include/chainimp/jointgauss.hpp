#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "chainimp/chains.hpp"
#include "chainimp/data.hpp"
#include "chainimp/rng.hpp"

namespace chainimp {

/// Multivariate Gaussian parameters (mean vector and SPD covariance).
struct GaussParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  /// {"mu": [...], "sigma": [[...], ...]} for inspection dumps.
  std::string to_json() const;
};

/// Parameters of one Gaussian conditional x_j | x_{-j}: intercept,
/// coefficients on the remaining columns in ascending column order, and
/// residual variance.
struct CondGaussSpec {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double residual_var = 1.0;
};

/// The zero-mean bivariate special case.
struct BivariateZeroMeanParams {
  double sigma_x2 = 1.0;
  double sigma_y2 = 1.0;
  double rho = 0.0;
};

struct BivariateParams {
  double mu_x = 0.0;
  double sigma_x2 = 1.0;
  double mu_y = 0.0;
  double sigma_y2 = 1.0;
  double rho = 0.0;
};

/// Conditional of x given y: (mu_x - rho sx/sy mu_y, rho sx/sy, (1-rho^2) sx^2).
CondGaussSpec t1_bivariate(const BivariateParams& p);
/// Conditional of y given x: (mu_y - rho sy/sx mu_x, rho sy/sx, (1-rho^2) sy^2).
CondGaussSpec t2_bivariate(const BivariateParams& p);
/// The companion marginal map for the y|x conditional: (mu_x, sigma_x2).
std::pair<double, double> t2_star(const BivariateParams& p);
/// Inverse of the (t2, t2_star) reparameterization.
BivariateParams t2_joint_inverse(const CondGaussSpec& y_given_x, double mu_x,
                                 double sigma_x2);

/// Logistic parameters (alpha, beta) for x1 | x2 under the joint model
/// x1 ~ Bernoulli(p), x2 | x1 ~ N(beta0 + beta1 x1, sigma2), in the nominal
/// published form: (log(p/(1-p)) - beta1^2/(2 sigma2), beta1/(2 sigma2)).
/// The Monte Carlo oracle in the test suite shows this form's slope is off
/// by a factor of two; logit_conditional_exact carries the validated map.
std::pair<double, double> logit_compat_map(double p, double beta0, double beta1,
                                           double sigma2);

/// Exact Bayes-rule conditional of the same joint model:
/// alpha = log(p/(1-p)) - beta1^2/(2 sigma2) - beta0 beta1/sigma2,
/// beta  = beta1/sigma2. Validated by the simulate-and-fit oracle.
std::pair<double, double> logit_conditional_exact(double p, double beta0, double beta1,
                                                  double sigma2);

/// Sample mean and ML covariance (divisor n) of a complete matrix.
GaussParams gaussian_mle(const Eigen::MatrixXd& complete);

/// ML covariance of the zero-mean model: the raw second-moment matrix.
/// This is the family the no-intercept bivariate conditionals embed into.
GaussParams gaussian_mle_zero_mean(const Eigen::MatrixXd& complete);

/// Posterior draw under pi(mu, Sigma) ~ |Sigma|^{-(p+1)/2}:
/// Sigma ~ IW(n-1, S) with S the centered scatter, then mu | Sigma ~
/// Normal(xbar, Sigma/n). Requires n > p + 2.
GaussParams niw_posterior_draw(const Eigen::MatrixXd& complete, RngStream& rng);

/// Exact Gaussian conditional of column j on the rest.
CondGaussSpec conditional_spec(const GaussParams& params, Eigen::Index j);

/// One data-augmentation sweep: draw (mu, Sigma) from the completed matrix,
/// then redraw each row's missing cells jointly from the conditional
/// Gaussian given that row's observed cells. Observed cells are untouched.
void da_sweep(ChainState& state, RngStream& rng);

/// The zero-mean bivariate joint-model sweep: per variable, draw (beta, tau2)
/// by flat-prior linear regression of that variable on the other over the
/// rows where it is observed (the induced conditional prior is constant),
/// then impute its missing cells. Under matched seeds this is the same
/// function of (state, rng) as the iterative sweep with flat-prior
/// no-intercept specs.
void bivariate_gibbs_sweep(ChainState& state, const BivariatePattern& pat,
                           RngStream& rng);

/// Log-likelihood of the observed cells under a Gaussian model (each row
/// contributes its observed sub-vector's marginal normal density).
double gaussian_observed_loglik(const DataMatrix& dm, const GaussParams& params);

struct EmResult {
  GaussParams params;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
};

/// EM for the Gaussian observed-data MLE, run to a sup-norm parameter
/// change below tol or max_iter sweeps. Requires every pair of columns to
/// be jointly observed somewhere.
EmResult em_observed_mle_detailed(const DataMatrix& dm, double tol = 1e-8,
                                  int max_iter = 500);
GaussParams em_observed_mle(const DataMatrix& dm);

/// Observed-data MLE with the mean pinned at zero, matching the family the
/// no-intercept conditional models embed into; only the covariance moves.
EmResult em_observed_mle_zero_mean_detailed(const DataMatrix& dm, double tol = 1e-8,
                                            int max_iter = 500);
GaussParams em_observed_mle_zero_mean(const DataMatrix& dm);

}  // namespace chainimp
