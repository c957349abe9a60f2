#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "chainimp/errors.hpp"

namespace chainimp {

/// Splittable counter-based random stream (SplitMix-style state walk with a
/// per-stream odd increment). The same (seed, fork path) replays the same
/// draw sequence across runs; forks with distinct labels give statistically
/// independent substreams without coordination, so chains, replicates, and
/// variables can each own one.
///
/// A stream's full state is two 64-bit words; save()/restore() round-trips
/// it exactly, which is what chain checkpointing relies on.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent substream named by a label. Does not advance this stream.
  RngStream fork(std::string_view label) const;
  /// Independent substream indexed by lane (replicate/chain/row number).
  RngStream fork(std::uint64_t lane) const;

  std::uint64_t next_u64();

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal via the Marsaglia polar method. No spare is cached:
  /// the (state, increment) pair is always the complete stream state.
  double normal();
  /// Gamma(shape, 1), shape > 0. Marsaglia–Tsang squeeze.
  double gamma(double shape);
  /// Chi-square with df > 0 degrees of freedom (df need not be integer).
  double chisq(double df);
  /// Uniform index in {0, ..., n-1}; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  struct Saved {
    std::uint64_t state;
    std::uint64_t increment;
  };
  Saved save() const { return {state_, incr_}; }
  static RngStream restore(const Saved& s) { return RngStream(s.state, s.increment); }

  bool operator==(const RngStream& other) const = default;

 private:
  RngStream(std::uint64_t state, std::uint64_t incr) : state_(state), incr_(incr) {}

  std::uint64_t state_;
  std::uint64_t incr_;  // odd
};

// ---- distribution draws ----------------------------------------------------

/// mean + L z with L the pivot-tolerant lower Cholesky factor of cov and z
/// standard normal. cov must be symmetric PSD; a zero matrix yields mean
/// exactly.
Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& rng);

/// df * scale / chisq(df); df > 0, scale > 0.
double draw_scaled_inv_chisq(double df, double scale, RngStream& rng);

/// Inverse-Wishart(df, scale) via the Bartlett decomposition; df > p - 1 and
/// scale SPD. Output is SPD.
Eigen::MatrixXd draw_inv_wishart(double df, const Eigen::MatrixXd& scale,
                                 RngStream& rng);

/// 1 with probability prob, else 0; prob in [0, 1].
int draw_bernoulli(double prob, RngStream& rng);

/// Lower Cholesky factor tolerating positive semi-definite input: pivots
/// within rel_tol of zero (relative to the largest diagonal entry) zero out
/// their column. A pivot below -rel_tol throws NumericError naming the
/// offending leading minor (1-based).
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

}  // namespace chainimp
