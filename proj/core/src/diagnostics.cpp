#include "chainimp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "chainimp/condmodels.hpp"

namespace chainimp {

std::pair<double, double> monitored_betas(const ChainState& state,
                                          const BivariatePattern& pat) {
  if (state.n_cols() != 2)
    throw std::invalid_argument("monitored_betas: state must have 2 columns");
  if (state.n_rows() != pat.n_rows())
    throw std::invalid_argument("monitored_betas: pattern size mismatch");

  double num_b = 0.0, den_b = 0.0;
  for (Eigen::Index i = pat.n_a; i < pat.n_a + pat.n_b; ++i) {
    num_b += state.data(i, 0) * state.data(i, 1);
    den_b += state.data(i, 1) * state.data(i, 1);
  }
  double num_c = 0.0, den_c = 0.0;
  for (Eigen::Index i = pat.n_a + pat.n_b; i < pat.n_rows(); ++i) {
    num_c += state.data(i, 0) * state.data(i, 1);
    den_c += state.data(i, 0) * state.data(i, 0);
  }
  if (den_b == 0.0) throw NumericError("monitored_betas: zero denominator in block b");
  if (den_c == 0.0) throw NumericError("monitored_betas: zero denominator in block c");
  return {num_b / den_b, num_c / den_c};
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample: samples must be non-empty");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < sa.size() && ib < sb.size()) {
    const double t = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= t) ++ia;
    while (ib < sb.size() && sb[ib] <= t) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return {d, sa.size(), sb.size()};
}

namespace {

// Empirical quantile at level q: position q*n - 0.5 between order
// statistics, linearly interpolated, clamped at the extremes.
double empirical_quantile(const std::vector<double>& sorted, double q) {
  const double n = static_cast<double>(sorted.size());
  const double h = q * n - 0.5;
  if (h <= 0.0) return sorted.front();
  if (h >= n - 1.0) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

std::vector<std::pair<double, double>> qq_points(std::span<const double> a,
                                                 std::span<const double> b, int k) {
  if (k < 1) throw std::invalid_argument("qq_points: k must be positive");
  if (a.size() < static_cast<std::size_t>(k) || b.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("qq_points: samples must have at least k values");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) {
    const double level = (static_cast<double>(i) - 0.5) / static_cast<double>(k);
    out.emplace_back(empirical_quantile(sa, level), empirical_quantile(sb, level));
  }
  return out;
}

void write_qq_csv(std::span<const std::pair<double, double>> points, int k,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_qq_csv: cannot open '" + path + "'");
  out << "level,q_left,q_right\n";
  char buf[160];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double level = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", level, points[i].first,
                  points[i].second);
    out << buf;
  }
  if (!out) throw IoError("write_qq_csv: write failed for '" + path + "'");
}

TvEstimate binned_tv(std::span<const double> a, std::span<const double> b, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("binned_tv: need at least 2 bins");
  if (a.empty() || b.empty())
    throw std::invalid_argument("binned_tv: samples must be non-empty");

  double lo = a.front(), hi = a.front();
  for (double v : a) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : b) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  TvEstimate tv;
  tv.n_bins = n_bins;
  tv.n_a = a.size();
  tv.n_b = b.size();
  if (lo == hi) {
    tv.degenerate_range = true;
    tv.value = 0.0;
    return tv;
  }

  const double width = (hi - lo) / static_cast<double>(n_bins);
  std::vector<double> pa(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> pb(static_cast<std::size_t>(n_bins), 0.0);
  auto bin_of = [&](double v) {
    auto k = static_cast<long>((v - lo) / width);
    if (k < 0) k = 0;
    if (k >= n_bins) k = n_bins - 1;
    return static_cast<std::size_t>(k);
  };
  for (double v : a) pa[bin_of(v)] += 1.0 / static_cast<double>(a.size());
  for (double v : b) pb[bin_of(v)] += 1.0 / static_cast<double>(b.size());

  double sum = 0.0;
  for (int k = 0; k < n_bins; ++k)
    sum += std::abs(pa[static_cast<std::size_t>(k)] - pb[static_cast<std::size_t>(k)]);
  tv.value = 0.5 * sum;
  return tv;
}

RhatResult rhat(const TraceSet& traces, std::string_view statistic) {
  const int c = traces.n_chains();
  if (c < 2) throw std::invalid_argument("rhat: need at least 2 chains");
  const std::size_t m = traces.n_records();
  if (m < 10) throw std::invalid_argument("rhat: need at least 10 records per chain");

  std::vector<double> means(static_cast<std::size_t>(c));
  std::vector<double> vars(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const auto t = traces.trace(ch, statistic);
    if (t.size() != m) throw std::invalid_argument("rhat: unequal chain lengths");
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m - 1);
    means[static_cast<std::size_t>(ch)] = mean;
    vars[static_cast<std::size_t>(ch)] = var;
  }

  double w = 0.0;
  for (double v : vars) w += v;
  w /= static_cast<double>(c);

  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= static_cast<double>(c);
  double var_means = 0.0;
  for (double v : means) var_means += (v - grand) * (v - grand);
  var_means /= static_cast<double>(c - 1);
  const double b = static_cast<double>(m) * var_means;

  RhatResult r;
  if (w == 0.0) {
    r.degenerate = true;
    r.value = b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return r;
  }
  const double md = static_cast<double>(m);
  r.value = std::sqrt((w * (md - 1.0) / md + b / md) / w);
  return r;
}

// ---- prior-sensitivity decay -----------------------------------------------------

namespace {

// Posterior draws of the y-on-x regression fitted to a simulated bivariate
// dataset. The two variance priors shift only the sigma2 degrees of
// freedom; beta given sigma2 has the same law under both, so the TV between
// the full posteriors equals the TV between the sigma2 marginals. The
// sigma2 draws are therefore what the decay curve bins: the predictive
// draw of y at a fixed covariate would dilute the same distance far below
// the binned estimator's Monte Carlo floor.
std::vector<double> sigma2_posterior_sample(const Eigen::MatrixXd& xy, LinearPrior prior,
                                            int n_draws, RngStream& rng) {
  const Eigen::MatrixXd X = xy.col(0);
  const Eigen::VectorXd y = xy.col(1);
  const LinearLsqFit fit = linear_lsq(X, y);
  const Eigen::Index n = X.rows();
  const double df = prior == LinearPrior::jeffreys ? static_cast<double>(n - 1)
                                                   : static_cast<double>(n - 3);
  std::vector<double> out(static_cast<std::size_t>(n_draws));
  for (int d = 0; d < n_draws; ++d)
    out[static_cast<std::size_t>(d)] = draw_scaled_inv_chisq(df, fit.rss / df, rng);
  return out;
}

Eigen::MatrixXd simulate_bivariate(Eigen::Index n, double rho, RngStream& rng) {
  Eigen::MatrixXd xy(n, 2);
  const double s = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    xy(i, 0) = z1;
    xy(i, 1) = rho * z1 + s * z2;
  }
  return xy;
}

}  // namespace

std::vector<std::pair<Eigen::Index, TvEstimate>> prior_sensitivity_curve(
    std::span<const Eigen::Index> ns, RngStream& rng, int n_draws, int n_bins) {
  std::vector<std::pair<Eigen::Index, TvEstimate>> out;
  for (Eigen::Index n : ns) {
    if (n < 6)
      throw std::invalid_argument("prior_sensitivity_curve: n too small for proper posteriors");
    RngStream data_rng = rng.fork("data").fork(static_cast<std::uint64_t>(n));
    const Eigen::MatrixXd xy = simulate_bivariate(n, 0.5, data_rng);
    RngStream rng_j = rng.fork("jeffreys").fork(static_cast<std::uint64_t>(n));
    RngStream rng_f = rng.fork("flat").fork(static_cast<std::uint64_t>(n));
    const std::vector<double> a =
        sigma2_posterior_sample(xy, LinearPrior::jeffreys, n_draws, rng_j);
    const std::vector<double> b =
        sigma2_posterior_sample(xy, LinearPrior::flat, n_draws, rng_f);
    out.emplace_back(n, binned_tv(a, b, n_bins));
  }
  return out;
}

TvEstimate prior_sensitivity_null(Eigen::Index n, RngStream& rng, int n_draws, int n_bins) {
  RngStream data_rng = rng.fork("data").fork(static_cast<std::uint64_t>(n));
  const Eigen::MatrixXd xy = simulate_bivariate(n, 0.5, data_rng);
  RngStream rng_1 = rng.fork("null-a").fork(static_cast<std::uint64_t>(n));
  RngStream rng_2 = rng.fork("null-b").fork(static_cast<std::uint64_t>(n));
  const std::vector<double> a =
      sigma2_posterior_sample(xy, LinearPrior::jeffreys, n_draws, rng_1);
  const std::vector<double> b =
      sigma2_posterior_sample(xy, LinearPrior::jeffreys, n_draws, rng_2);
  return binned_tv(a, b, n_bins);
}

double loglog_slope(std::span<const std::pair<Eigen::Index, TvEstimate>> curve) {
  if (curve.size() < 2) throw std::invalid_argument("loglog_slope: need at least 2 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(curve.size());
  for (const auto& [size, tv] : curve) {
    const double x = std::log(static_cast<double>(size));
    const double y = std::log(std::max(tv.value, 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace chainimp
