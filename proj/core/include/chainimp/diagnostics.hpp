#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chainimp/chains.hpp"
#include "chainimp/data.hpp"
#include "chainimp/rng.hpp"

namespace chainimp {

struct KsResult {
  double statistic = 0.0;  // in [0, 1]
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

struct TvEstimate {
  double value = 0.0;  // in [0, 1]
  int n_bins = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  bool degenerate_range = false;
};

struct RhatResult {
  double value = 1.0;
  bool degenerate = false;  // all chains constant and equal
};

/// The two monitored slope statistics of the three-block bivariate setting:
/// beta_x = sum_b x_i y_i / sum_b y_i^2 over the missing-y block and
/// beta_y = sum_c x_i y_i / sum_c x_i^2 over the missing-x block, both
/// evaluated on the completed data.
std::pair<double, double> monitored_betas(const ChainState& state,
                                          const BivariatePattern& pat);

/// sup_t |F_a(t) - F_b(t)| over the pooled sample points.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Matched empirical quantiles of both samples at levels (i - 0.5) / k,
/// linearly interpolated between order statistics.
std::vector<std::pair<double, double>> qq_points(std::span<const double> a,
                                                 std::span<const double> b, int k);

/// Writes level,q_left,q_right rows for plotting.
void write_qq_csv(std::span<const std::pair<double, double>> points, int k,
                  const std::string& path);

/// (1/2) sum over equal-width bins of |p_a - p_b|, binned over the pooled
/// range. A degenerate pooled range (all values equal) yields 0 with the
/// degenerate flag set.
TvEstimate binned_tv(std::span<const double> a, std::span<const double> b, int n_bins);

/// Potential scale reduction sqrt((W (m-1)/m + B/m) / W) with W the mean
/// within-chain variance, B the between-chain variance (m times the
/// variance of chain means), and m the records per chain.
RhatResult rhat(const TraceSet& traces, std::string_view statistic);

/// Prior-sensitivity decay experiment: for each sample size, simulate a
/// zero-mean bivariate dataset, draw from the posterior predictive of the
/// y-on-x regression under the two variance priors, and report their binned
/// TV. The curve is the empirical analogue of the n^{-1/4} prior bound.
std::vector<std::pair<Eigen::Index, TvEstimate>> prior_sensitivity_curve(
    std::span<const Eigen::Index> ns, RngStream& rng, int n_draws = 100000,
    int n_bins = 50);

/// Same experiment with both engines using one prior; TV is Monte Carlo
/// noise only. Used to calibrate the noise floor.
TvEstimate prior_sensitivity_null(Eigen::Index n, RngStream& rng, int n_draws = 100000,
                                  int n_bins = 50);

/// Ordinary-least-squares slope of log(tv) on log(n).
double loglog_slope(std::span<const std::pair<Eigen::Index, TvEstimate>> curve);

}  // namespace chainimp
