#include "chainimp/rng.hpp"

#include <cmath>
#include <string>

namespace chainimp {

namespace {

// SplitMix64 finalizer (Stafford mix13).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Variant mix with different multipliers, used to derive fork increments so
// state and increment words decorrelate.
inline std::uint64_t mix64_v2(std::uint64_t z) {
  z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  return z ^ (z >> 33);
}

constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed)
    : state_(mix64(seed + kGoldenGamma)), incr_(mix64_v2(seed) | 1ULL) {}

RngStream RngStream::fork(std::string_view label) const {
  const std::uint64_t tag = fnv1a(label);
  const std::uint64_t state = mix64(state_ ^ tag);
  const std::uint64_t incr = mix64_v2(incr_ + (tag ^ kGoldenGamma)) | 1ULL;
  return RngStream(state, incr);
}

RngStream RngStream::fork(std::uint64_t lane) const {
  const std::uint64_t tag = mix64(lane + kGoldenGamma);
  const std::uint64_t state = mix64(state_ ^ tag);
  const std::uint64_t incr = mix64_v2(incr_ + (tag ^ kGoldenGamma)) | 1ULL;
  return RngStream(state, incr);
}

std::uint64_t RngStream::next_u64() {
  state_ += incr_;
  return mix64(state_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // Polar method; the companion deviate is discarded so the stream state
  // stays exactly (state, increment).
  for (;;) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s >= 1.0 || s == 0.0) continue;
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double u = 1.0 - uniform();  // (0, 1]
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform();  // avoid log(0)
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::chisq(double df) {
  if (!(df > 0.0)) throw std::invalid_argument("chisq: df must be > 0");
  return 2.0 * gamma(0.5 * df);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection sampling for an exactly uniform index.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r < limit) return r % n;
  }
}

// ---- matrix helpers ---------------------------------------------------------

Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& m, double rel_tol) {
  const Eigen::Index p = m.rows();
  if (m.cols() != p) throw std::invalid_argument("psd_cholesky: matrix must be square");
  double scale = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) scale = std::max(scale, std::abs(m(i, i)));
  const double tol = rel_tol * std::max(scale, 1e-300);

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double d = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d < -tol) {
      throw NumericError("psd_cholesky: leading minor " + std::to_string(j + 1) +
                         " is not positive semi-definite (pivot " + std::to_string(d) + ")");
    }
    if (d <= tol) {
      // Semi-definite direction: zero column.
      continue;
    }
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < p; ++i) {
      double s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                         RngStream& rng) {
  const Eigen::Index p = mean.size();
  if (cov.rows() != p || cov.cols() != p)
    throw std::invalid_argument("draw_mvn: cov dimensions do not match mean");
  const Eigen::MatrixXd L = psd_cholesky(cov);
  Eigen::VectorXd z(p);
  for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal();
  return mean + L * z;
}

double draw_scaled_inv_chisq(double df, double scale, RngStream& rng) {
  if (!(df > 0.0)) throw std::invalid_argument("draw_scaled_inv_chisq: df must be > 0");
  if (!(scale > 0.0)) throw std::invalid_argument("draw_scaled_inv_chisq: scale must be > 0");
  return df * scale / rng.chisq(df);
}

Eigen::MatrixXd draw_inv_wishart(double df, const Eigen::MatrixXd& scale,
                                 RngStream& rng) {
  const Eigen::Index p = scale.rows();
  if (scale.cols() != p) throw std::invalid_argument("draw_inv_wishart: scale must be square");
  if (!(df > static_cast<double>(p) - 1.0))
    throw std::invalid_argument("draw_inv_wishart: df must exceed p - 1");
  Eigen::MatrixXd L;
  try {
    L = psd_cholesky(scale);
  } catch (const NumericError& e) {
    throw NumericError(std::string("draw_inv_wishart: scale is not SPD: ") + e.what());
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (L(j, j) == 0.0) throw NumericError("draw_inv_wishart: scale is rank-deficient");
  }

  // Bartlett factor of Wishart(df, I): lower triangular A with chi draws on
  // the diagonal and standard normals below.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
    A(i, i) = std::sqrt(rng.chisq(df - static_cast<double>(i)));
  }
  // If W ~ Wishart(df, I) = A A^T then L W^{-1} L^T ~ IW(df, L L^T).
  // M = L A^{-T} gives the result as M M^T using triangular solves only.
  Eigen::MatrixXd M =
      A.transpose().triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(L);
  return M * M.transpose();
}

int draw_bernoulli(double prob, RngStream& rng) {
  if (!(prob >= 0.0 && prob <= 1.0))
    throw std::invalid_argument("draw_bernoulli: prob must be in [0, 1]");
  return rng.uniform() < prob ? 1 : 0;
}

}  // namespace chainimp
