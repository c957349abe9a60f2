#include "chainimp/jointgauss.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include <Eigen/Cholesky>

#include <json.hpp>

namespace chainimp {

namespace {

void check_bivariate(const BivariateParams& p, const char* where) {
  if (!(p.sigma_x2 > 0.0) || !(p.sigma_y2 > 0.0))
    throw std::invalid_argument(std::string(where) + ": variances must be positive");
  if (!(std::abs(p.rho) <= 1.0))
    throw std::invalid_argument(std::string(where) + ": |rho| must be <= 1");
}

}  // namespace

CondGaussSpec t1_bivariate(const BivariateParams& p) {
  check_bivariate(p, "t1_bivariate");
  const double slope = p.rho * std::sqrt(p.sigma_x2 / p.sigma_y2);
  CondGaussSpec out;
  out.intercept = p.mu_x - slope * p.mu_y;
  out.coefficients = Eigen::VectorXd::Constant(1, slope);
  out.residual_var = (1.0 - p.rho * p.rho) * p.sigma_x2;
  return out;
}

CondGaussSpec t2_bivariate(const BivariateParams& p) {
  check_bivariate(p, "t2_bivariate");
  const double slope = p.rho * std::sqrt(p.sigma_y2 / p.sigma_x2);
  CondGaussSpec out;
  out.intercept = p.mu_y - slope * p.mu_x;
  out.coefficients = Eigen::VectorXd::Constant(1, slope);
  out.residual_var = (1.0 - p.rho * p.rho) * p.sigma_y2;
  return out;
}

std::pair<double, double> t2_star(const BivariateParams& p) {
  check_bivariate(p, "t2_star");
  return {p.mu_x, p.sigma_x2};
}

BivariateParams t2_joint_inverse(const CondGaussSpec& y_given_x, double mu_x,
                                 double sigma_x2) {
  if (!(sigma_x2 > 0.0))
    throw std::invalid_argument("t2_joint_inverse: sigma_x2 must be positive");
  if (!(y_given_x.residual_var > 0.0))
    throw std::invalid_argument("t2_joint_inverse: residual variance must be positive");
  if (y_given_x.coefficients.size() != 1)
    throw std::invalid_argument("t2_joint_inverse: expected a single slope coefficient");
  const double beta = y_given_x.coefficients(0);
  BivariateParams p;
  p.mu_x = mu_x;
  p.sigma_x2 = sigma_x2;
  p.sigma_y2 = y_given_x.residual_var + beta * beta * sigma_x2;
  p.rho = beta * std::sqrt(sigma_x2 / p.sigma_y2);
  p.mu_y = y_given_x.intercept + beta * mu_x;
  return p;
}

std::pair<double, double> logit_compat_map(double p, double beta0, double beta1,
                                           double sigma2) {
  (void)beta0;
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("logit_compat_map: p must be in (0, 1)");
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("logit_compat_map: sigma2 must be positive");
  const double alpha = std::log(p / (1.0 - p)) - beta1 * beta1 / (2.0 * sigma2);
  const double beta = beta1 / (2.0 * sigma2);
  return {alpha, beta};
}

std::pair<double, double> logit_conditional_exact(double p, double beta0, double beta1,
                                                  double sigma2) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("logit_conditional_exact: p must be in (0, 1)");
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("logit_conditional_exact: sigma2 must be positive");
  const double alpha = std::log(p / (1.0 - p)) - beta1 * beta1 / (2.0 * sigma2) -
                       beta0 * beta1 / sigma2;
  const double beta = beta1 / sigma2;
  return {alpha, beta};
}

std::string GaussParams::to_json() const {
  nlohmann::json j;
  j["mu"] = std::vector<double>(mu.begin(), mu.end());
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < sigma.cols(); ++c) row.push_back(sigma(i, c));
    rows.push_back(std::move(row));
  }
  j["sigma"] = std::move(rows);
  return j.dump(2);
}

GaussParams gaussian_mle(const Eigen::MatrixXd& complete) {
  const Eigen::Index n = complete.rows();
  if (n < 1) throw std::invalid_argument("gaussian_mle: empty matrix");
  GaussParams out;
  out.mu = complete.colwise().mean();
  const Eigen::MatrixXd centered = complete.rowwise() - out.mu.transpose();
  out.sigma = centered.transpose() * centered / static_cast<double>(n);
  return out;
}

GaussParams gaussian_mle_zero_mean(const Eigen::MatrixXd& complete) {
  const Eigen::Index n = complete.rows();
  if (n < 1) throw std::invalid_argument("gaussian_mle_zero_mean: empty matrix");
  GaussParams out;
  out.mu = Eigen::VectorXd::Zero(complete.cols());
  out.sigma = complete.transpose() * complete / static_cast<double>(n);
  return out;
}

GaussParams niw_posterior_draw(const Eigen::MatrixXd& complete, RngStream& rng) {
  const Eigen::Index n = complete.rows();
  const Eigen::Index p = complete.cols();
  if (n <= p + 2) throw std::invalid_argument("niw_posterior_draw: need n > p + 2");
  const Eigen::VectorXd xbar = complete.colwise().mean();
  const Eigen::MatrixXd centered = complete.rowwise() - xbar.transpose();
  const Eigen::MatrixXd scatter = centered.transpose() * centered;

  GaussParams out;
  try {
    out.sigma = draw_inv_wishart(static_cast<double>(n - 1), scatter, rng);
  } catch (const NumericError& e) {
    throw NumericError(std::string("niw_posterior_draw: degenerate scatter: ") + e.what());
  }
  out.mu = draw_mvn(xbar, out.sigma / static_cast<double>(n), rng);
  return out;
}

CondGaussSpec conditional_spec(const GaussParams& params, Eigen::Index j) {
  const Eigen::Index p = params.mu.size();
  if (params.sigma.rows() != p || params.sigma.cols() != p)
    throw std::invalid_argument("conditional_spec: mu/sigma dimension mismatch");
  if (j < 0 || j >= p) throw std::invalid_argument("conditional_spec: column out of range");

  std::vector<Eigen::Index> rest;
  for (Eigen::Index k = 0; k < p; ++k)
    if (k != j) rest.push_back(k);
  const Eigen::Index q = static_cast<Eigen::Index>(rest.size());

  CondGaussSpec out;
  if (q == 0) {
    out.intercept = params.mu(j);
    out.coefficients = Eigen::VectorXd();
    out.residual_var = params.sigma(j, j);
    return out;
  }

  Eigen::MatrixXd S_rr(q, q);
  Eigen::VectorXd S_rj(q);
  Eigen::VectorXd mu_r(q);
  for (Eigen::Index a = 0; a < q; ++a) {
    S_rj(a) = params.sigma(rest[static_cast<std::size_t>(a)], j);
    mu_r(a) = params.mu(rest[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < q; ++b)
      S_rr(a, b) =
          params.sigma(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(b)]);
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(S_rr);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("conditional_spec: covariance of conditioning block is singular");
  out.coefficients = ldlt.solve(S_rj);
  out.intercept = params.mu(j) - out.coefficients.dot(mu_r);
  out.residual_var = params.sigma(j, j) - out.coefficients.dot(S_rj);
  if (!(out.residual_var > 0.0))
    throw NumericError("conditional_spec: nonpositive residual variance");
  return out;
}

// ---- data augmentation --------------------------------------------------------

namespace {

// Missing pattern of one row as a bitmask (p <= 64 columns).
std::uint64_t pattern_key(const BoolMask& mask, Eigen::Index row) {
  std::uint64_t key = 0;
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    if (!mask(row, j)) key |= (1ULL << j);
  return key;
}

struct PatternConditional {
  std::vector<Eigen::Index> mis, obs;
  Eigen::MatrixXd B;  // regression of missing on observed
  Eigen::MatrixXd L;  // lower Cholesky of the conditional covariance
};

PatternConditional make_conditional(const GaussParams& params, std::uint64_t key,
                                    Eigen::Index p) {
  PatternConditional pc;
  for (Eigen::Index j = 0; j < p; ++j)
    ((key >> j) & 1ULL ? pc.mis : pc.obs).push_back(j);

  const Eigen::Index m = static_cast<Eigen::Index>(pc.mis.size());
  const Eigen::Index o = static_cast<Eigen::Index>(pc.obs.size());
  Eigen::MatrixXd S_mm(m, m), S_mo(m, o), S_oo(o, o);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b)
      S_mm(a, b) = params.sigma(pc.mis[static_cast<std::size_t>(a)],
                                pc.mis[static_cast<std::size_t>(b)]);
    for (Eigen::Index b = 0; b < o; ++b)
      S_mo(a, b) = params.sigma(pc.mis[static_cast<std::size_t>(a)],
                                pc.obs[static_cast<std::size_t>(b)]);
  }
  for (Eigen::Index a = 0; a < o; ++a)
    for (Eigen::Index b = 0; b < o; ++b)
      S_oo(a, b) = params.sigma(pc.obs[static_cast<std::size_t>(a)],
                                pc.obs[static_cast<std::size_t>(b)]);

  if (o == 0) {
    pc.B.resize(m, 0);
    pc.L = psd_cholesky(params.sigma);
    return pc;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S_oo);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("da_sweep: observed-block covariance is singular");
  pc.B = ldlt.solve(S_mo.transpose()).transpose();  // m x o
  if (m > 0) {
    const Eigen::MatrixXd cond = S_mm - pc.B * S_mo.transpose();
    pc.L = psd_cholesky(cond);
  }
  return pc;
}

}  // namespace

void da_sweep(ChainState& state, RngStream& rng) {
  const Eigen::Index p = state.n_cols();
  if (p > 64) throw std::invalid_argument("da_sweep: more than 64 columns unsupported");

  const GaussParams params = niw_posterior_draw(state.data, rng);
  state.joint_mu = params.mu;
  state.joint_sigma = params.sigma;

  std::map<std::uint64_t, PatternConditional> cache;
  for (Eigen::Index i = 0; i < state.n_rows(); ++i) {
    const std::uint64_t key = pattern_key(state.mask, i);
    if (key == 0) continue;
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, make_conditional(params, key, p)).first;
    const PatternConditional& pc = it->second;

    const Eigen::Index m = static_cast<Eigen::Index>(pc.mis.size());
    const Eigen::Index o = static_cast<Eigen::Index>(pc.obs.size());
    Eigen::VectorXd mean(m);
    for (Eigen::Index a = 0; a < m; ++a) mean(a) = params.mu(pc.mis[static_cast<std::size_t>(a)]);
    if (o > 0) {
      Eigen::VectorXd dev(o);
      for (Eigen::Index b = 0; b < o; ++b) {
        const Eigen::Index col = pc.obs[static_cast<std::size_t>(b)];
        dev(b) = state.data(i, col) - params.mu(col);
      }
      mean += pc.B * dev;
    }
    Eigen::VectorXd z(m);
    for (Eigen::Index a = 0; a < m; ++a) z(a) = rng.normal();
    const Eigen::VectorXd draw = mean + pc.L * z;
    for (Eigen::Index a = 0; a < m; ++a)
      state.data(i, pc.mis[static_cast<std::size_t>(a)]) = draw(a);
  }
  ++state.iter;
}

void bivariate_gibbs_sweep(ChainState& state, const BivariatePattern& pat,
                           RngStream& rng) {
  if (state.n_cols() != 2)
    throw std::invalid_argument("bivariate_gibbs_sweep: state must have 2 columns");
  if (state.n_rows() != pat.n_rows())
    throw std::invalid_argument("bivariate_gibbs_sweep: pattern size mismatch");

  // The induced prior on each conditional regression is flat, so the joint
  // model's per-variable update is exactly a flat-prior regression draw of
  // the zero-mean conditional on that variable's observed rows, followed by
  // predictive imputation.
  for (Eigen::Index target = 0; target < 2; ++target) {
    ConditionalModelSpec spec;
    spec.target = target;
    spec.family = Family::linear;
    spec.terms = {TermSpec::main(1 - target)};
    spec.prior = LinearPrior::flat;

    std::vector<Eigen::Index> fit_rows;
    fit_rows.reserve(static_cast<std::size_t>(state.n_rows()));
    for (Eigen::Index i = 0; i < state.n_rows(); ++i)
      if (state.mask(i, target)) fit_rows.push_back(i);
    const auto [X, y] = build_design(state.data, spec, fit_rows);
    const LinearDraw draw = linear_posterior_draw(X, y, spec.prior, rng);
    const std::vector<Eigen::Index> slots = state.missing_rows(target);
    if (!slots.empty()) {
      const Eigen::MatrixXd X_mis = build_design_rows(state.data, spec, slots);
      const Eigen::VectorXd imputed = linear_impute(X_mis, draw, rng);
      for (std::size_t s = 0; s < slots.size(); ++s)
        state.data(slots[s], target) = imputed(static_cast<Eigen::Index>(s));
    }
    state.draws[static_cast<std::size_t>(target)] = draw;
  }
  ++state.iter;
}

// ---- observed-data likelihood and EM -------------------------------------------

double gaussian_observed_loglik(const DataMatrix& dm, const GaussParams& params) {
  const Eigen::Index p = dm.n_cols();
  if (p > 64) throw std::invalid_argument("gaussian_observed_loglik: p > 64 unsupported");
  constexpr double log2pi = 1.8378770664093454836;  // log(2*pi)

  struct ObsBlock {
    std::vector<Eigen::Index> obs;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logdet = 0.0;
  };
  std::map<std::uint64_t, ObsBlock> cache;

  double ll = 0.0;
  for (Eigen::Index i = 0; i < dm.n_rows(); ++i) {
    std::uint64_t key = 0;
    for (Eigen::Index j = 0; j < p; ++j)
      if (dm.present(i, j)) key |= (1ULL << j);
    if (key == 0) continue;  // nothing observed in this row

    auto it = cache.find(key);
    if (it == cache.end()) {
      ObsBlock blk;
      for (Eigen::Index j = 0; j < p; ++j)
        if ((key >> j) & 1ULL) blk.obs.push_back(j);
      const Eigen::Index o = static_cast<Eigen::Index>(blk.obs.size());
      Eigen::MatrixXd S(o, o);
      for (Eigen::Index a = 0; a < o; ++a)
        for (Eigen::Index b = 0; b < o; ++b)
          S(a, b) = params.sigma(blk.obs[static_cast<std::size_t>(a)],
                                 blk.obs[static_cast<std::size_t>(b)]);
      blk.llt.compute(S);
      if (blk.llt.info() != Eigen::Success)
        throw NumericError("gaussian_observed_loglik: observed block not SPD");
      blk.logdet = 0.0;
      const Eigen::MatrixXd L = blk.llt.matrixL();
      for (Eigen::Index a = 0; a < o; ++a) blk.logdet += 2.0 * std::log(L(a, a));
      it = cache.emplace(key, std::move(blk)).first;
    }
    const ObsBlock& blk = it->second;
    const Eigen::Index o = static_cast<Eigen::Index>(blk.obs.size());
    Eigen::VectorXd dev(o);
    for (Eigen::Index a = 0; a < o; ++a) {
      const Eigen::Index col = blk.obs[static_cast<std::size_t>(a)];
      dev(a) = dm.values(i, col) - params.mu(col);
    }
    const double quad = dev.dot(blk.llt.solve(dev));
    ll += -0.5 * (static_cast<double>(o) * log2pi + blk.logdet + quad);
  }
  return ll;
}

namespace {

EmResult em_gaussian(const DataMatrix& dm, double tol, int max_iter, bool fix_mean_zero) {
  dm.validate();
  const Eigen::Index n = dm.n_rows();
  const Eigen::Index p = dm.n_cols();
  if (p > 64) throw std::invalid_argument("em_observed_mle: p > 64 unsupported");

  // Identifiability: every pair of columns jointly observed somewhere.
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a; b < p; ++b) {
      bool seen = false;
      for (Eigen::Index i = 0; i < n && !seen; ++i)
        seen = dm.present(i, a) && dm.present(i, b);
      if (!seen) {
        throw EstimationError(
            "em_observed_mle: columns " + dm.col_names[static_cast<std::size_t>(a)] + " and " +
            dm.col_names[static_cast<std::size_t>(b)] + " are never jointly observed");
      }
    }
  }

  // Initialize from complete cases, ridged if degenerate; fall back to
  // available-case moments when too few complete rows exist.
  GaussParams params;
  {
    std::vector<Eigen::Index> complete;
    for (Eigen::Index i = 0; i < n; ++i) {
      bool all = true;
      for (Eigen::Index j = 0; j < p && all; ++j) all = dm.present(i, j);
      if (all) complete.push_back(i);
    }
    if (complete.size() >= 2) {
      Eigen::MatrixXd cc(static_cast<Eigen::Index>(complete.size()), p);
      for (std::size_t r = 0; r < complete.size(); ++r)
        cc.row(static_cast<Eigen::Index>(r)) = dm.values.row(complete[r]);
      params = fix_mean_zero ? gaussian_mle_zero_mean(cc) : gaussian_mle(cc);
    } else {
      params.mu.resize(p);
      params.sigma = Eigen::MatrixXd::Zero(p, p);
      for (Eigen::Index j = 0; j < p; ++j) {
        double sum = 0.0, sum2 = 0.0;
        long cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!dm.present(i, j)) continue;
          sum += dm.values(i, j);
          sum2 += dm.values(i, j) * dm.values(i, j);
          ++cnt;
        }
        params.mu(j) = fix_mean_zero ? 0.0 : sum / static_cast<double>(cnt);
        params.sigma(j, j) = std::max(sum2 / static_cast<double>(cnt) -
                                          params.mu(j) * params.mu(j),
                                      1e-6);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(params.sigma);
    if (llt.info() != Eigen::Success)
      params.sigma += 1e-6 * Eigen::MatrixXd::Identity(p, p);
  }

  EmResult result;
  result.loglik_trace.push_back(gaussian_observed_loglik(dm, params));

  for (int it = 0; it < max_iter; ++it) {
    // E-step: expected sufficient statistics under the current parameters.
    Eigen::VectorXd t1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(p, p);
    std::map<std::uint64_t, PatternConditional> cache;

    for (Eigen::Index i = 0; i < n; ++i) {
      const std::uint64_t key = pattern_key(dm.present, i);
      Eigen::VectorXd ex(p);
      for (Eigen::Index j = 0; j < p; ++j) ex(j) = dm.present(i, j) ? dm.values(i, j) : 0.0;
      if (key == 0) {
        t1 += ex;
        t2 += ex * ex.transpose();
        continue;
      }
      auto itc = cache.find(key);
      if (itc == cache.end()) itc = cache.emplace(key, make_conditional(params, key, p)).first;
      const PatternConditional& pc = itc->second;
      const Eigen::Index m = static_cast<Eigen::Index>(pc.mis.size());
      const Eigen::Index o = static_cast<Eigen::Index>(pc.obs.size());

      Eigen::VectorXd cond_mean(m);
      for (Eigen::Index a = 0; a < m; ++a)
        cond_mean(a) = params.mu(pc.mis[static_cast<std::size_t>(a)]);
      if (o > 0) {
        Eigen::VectorXd dev(o);
        for (Eigen::Index b = 0; b < o; ++b) {
          const Eigen::Index col = pc.obs[static_cast<std::size_t>(b)];
          dev(b) = dm.values(i, col) - params.mu(col);
        }
        cond_mean += pc.B * dev;
      }
      for (Eigen::Index a = 0; a < m; ++a) ex(pc.mis[static_cast<std::size_t>(a)]) = cond_mean(a);
      t1 += ex;
      t2 += ex * ex.transpose();
      // Add the conditional covariance into the missing block.
      const Eigen::MatrixXd cond_cov = pc.L * pc.L.transpose();
      for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
          t2(pc.mis[static_cast<std::size_t>(a)], pc.mis[static_cast<std::size_t>(b)]) +=
              cond_cov(a, b);
    }

    // M-step.
    GaussParams next;
    next.mu = fix_mean_zero ? Eigen::VectorXd::Zero(p).eval()
                            : (t1 / static_cast<double>(n)).eval();
    next.sigma = t2 / static_cast<double>(n) - next.mu * next.mu.transpose();
    next.sigma = 0.5 * (next.sigma + next.sigma.transpose());

    const double ll = gaussian_observed_loglik(dm, next);
    const double prev_ll = result.loglik_trace.back();
    if (ll < prev_ll - 1e-8 * (1.0 + std::abs(prev_ll)))
      throw NumericError("em_observed_mle: observed-data log-likelihood decreased (" +
                         std::to_string(prev_ll) + " -> " + std::to_string(ll) + ")");
    result.loglik_trace.push_back(ll);

    double delta = (next.mu - params.mu).lpNorm<Eigen::Infinity>();
    delta = std::max(delta, (next.sigma - params.sigma).lpNorm<Eigen::Infinity>());
    params = next;
    result.iterations = it + 1;
    if (delta < tol) {
      result.converged = true;
      break;
    }
  }

  result.params = std::move(params);
  return result;
}

GaussParams em_run_with_warning(const DataMatrix& dm, bool fix_mean_zero) {
  EmResult r = em_gaussian(dm, 1e-8, 500, fix_mean_zero);
  if (!r.converged) {
    std::fprintf(stderr,
                 "em_observed_mle: warning: not converged after %d iterations "
                 "(last log-likelihood change %.3e)\n",
                 r.iterations,
                 r.loglik_trace.size() >= 2
                     ? r.loglik_trace.back() - r.loglik_trace[r.loglik_trace.size() - 2]
                     : 0.0);
  }
  return r.params;
}

}  // namespace

EmResult em_observed_mle_detailed(const DataMatrix& dm, double tol, int max_iter) {
  return em_gaussian(dm, tol, max_iter, false);
}

GaussParams em_observed_mle(const DataMatrix& dm) {
  return em_run_with_warning(dm, false);
}

EmResult em_observed_mle_zero_mean_detailed(const DataMatrix& dm, double tol,
                                            int max_iter) {
  return em_gaussian(dm, tol, max_iter, true);
}

GaussParams em_observed_mle_zero_mean(const DataMatrix& dm) {
  return em_run_with_warning(dm, true);
}

}  // namespace chainimp
