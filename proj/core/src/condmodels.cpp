#include "chainimp/condmodels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <json.hpp>

namespace chainimp {

using nlohmann::json;

// ---- specs ------------------------------------------------------------------

ConditionalModelSpec ConditionalModelSpec::without_interactions() const {
  ConditionalModelSpec out = *this;
  std::erase_if(out.terms,
                [](const TermSpec& t) { return t.kind == TermSpec::Kind::interaction; });
  return out;
}

void ConditionalModelSpec::validate(Eigen::Index n_cols,
                                    const std::vector<ColKind>& kinds) const {
  if (target < 0 || target >= n_cols)
    throw std::invalid_argument("model spec: target column out of range");
  if (family == Family::logistic && kinds[static_cast<std::size_t>(target)] != ColKind::binary)
    throw std::invalid_argument("model spec: logistic family requires a binary target");
  for (const TermSpec& t : terms) {
    switch (t.kind) {
      case TermSpec::Kind::intercept:
        break;
      case TermSpec::Kind::main:
        if (t.col_a < 0 || t.col_a >= n_cols)
          throw std::invalid_argument("model spec: main-effect column out of range");
        if (t.col_a == target)
          throw std::invalid_argument("model spec: term references the target column");
        break;
      case TermSpec::Kind::interaction:
        if (t.col_a < 0 || t.col_a >= n_cols || t.col_b < 0 || t.col_b >= n_cols)
          throw std::invalid_argument("model spec: interaction column out of range");
        if (t.col_a == t.col_b)
          throw std::invalid_argument("model spec: interaction columns must be distinct");
        if (t.col_a == target || t.col_b == target)
          throw std::invalid_argument("model spec: term references the target column");
        break;
    }
  }
}

namespace {

Eigen::Index name_to_col(const std::string& name, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  throw ParseError("model spec: unknown column '" + name + "'");
}

std::string term_to_string(const TermSpec& t, const std::vector<std::string>& names) {
  switch (t.kind) {
    case TermSpec::Kind::intercept:
      return "1";
    case TermSpec::Kind::main:
      return names[static_cast<std::size_t>(t.col_a)];
    case TermSpec::Kind::interaction:
      return names[static_cast<std::size_t>(t.col_a)] + "*" +
             names[static_cast<std::size_t>(t.col_b)];
  }
  return {};
}

TermSpec term_from_string(const std::string& s, const std::vector<std::string>& names) {
  if (s == "1") return TermSpec::intercept();
  const auto star = s.find('*');
  if (star == std::string::npos) return TermSpec::main(name_to_col(s, names));
  const std::string a = s.substr(0, star);
  const std::string b = s.substr(star + 1);
  return TermSpec::interaction(name_to_col(a, names), name_to_col(b, names));
}

json spec_to_json_obj(const ConditionalModelSpec& spec,
                      const std::vector<std::string>& names) {
  json j;
  j["target"] = names[static_cast<std::size_t>(spec.target)];
  j["family"] = spec.family == Family::linear ? "linear" : "logistic";
  json terms = json::array();
  for (const TermSpec& t : spec.terms) terms.push_back(term_to_string(t, names));
  j["terms"] = std::move(terms);
  if (spec.family == Family::linear)
    j["prior"] = spec.prior == LinearPrior::jeffreys ? "jeffreys" : "flat";
  return j;
}

ConditionalModelSpec spec_from_json_obj(const json& j,
                                        const std::vector<std::string>& names) {
  ConditionalModelSpec spec;
  spec.target = name_to_col(j.at("target").get<std::string>(), names);
  const std::string family = j.at("family").get<std::string>();
  if (family == "linear") {
    spec.family = Family::linear;
  } else if (family == "logistic") {
    spec.family = Family::logistic;
  } else {
    throw ParseError("model spec: unknown family '" + family + "'");
  }
  for (const auto& t : j.at("terms"))
    spec.terms.push_back(term_from_string(t.get<std::string>(), names));
  if (j.contains("prior")) {
    const std::string prior = j.at("prior").get<std::string>();
    if (prior == "jeffreys") {
      spec.prior = LinearPrior::jeffreys;
    } else if (prior == "flat") {
      spec.prior = LinearPrior::flat;
    } else {
      throw ParseError("model spec: unknown prior '" + prior + "'");
    }
  }
  return spec;
}

}  // namespace

std::string spec_to_json(const ConditionalModelSpec& spec,
                         const std::vector<std::string>& col_names) {
  return spec_to_json_obj(spec, col_names).dump(2);
}

ConditionalModelSpec spec_from_json(const std::string& json_text,
                                    const std::vector<std::string>& col_names) {
  return spec_from_json_obj(json::parse(json_text), col_names);
}

std::string specs_to_json(std::span<const ConditionalModelSpec> specs,
                          const std::vector<std::string>& col_names) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(spec_to_json_obj(s, col_names));
  json j;
  j["models"] = std::move(arr);
  return j.dump(2);
}

std::vector<ConditionalModelSpec> specs_from_json(const std::string& json_text,
                                                  const std::vector<std::string>& col_names) {
  const json j = json::parse(json_text);
  std::vector<ConditionalModelSpec> out;
  for (const auto& item : j.at("models")) out.push_back(spec_from_json_obj(item, col_names));
  return out;
}

// ---- design construction ------------------------------------------------------

std::pair<Eigen::MatrixXd, Eigen::VectorXd> build_design(
    const Eigen::MatrixXd& completed, const ConditionalModelSpec& spec,
    std::span<const Eigen::Index> rows) {
  Eigen::MatrixXd X = build_design_rows(completed, spec, rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    y(static_cast<Eigen::Index>(r)) = completed(rows[r], spec.target);
  return {std::move(X), std::move(y)};
}

Eigen::MatrixXd build_design_rows(const Eigen::MatrixXd& completed,
                                  const ConditionalModelSpec& spec,
                                  std::span<const Eigen::Index> rows) {
  for (const TermSpec& t : spec.terms) {
    if ((t.kind != TermSpec::Kind::intercept && t.col_a == spec.target) ||
        (t.kind == TermSpec::Kind::interaction && t.col_b == spec.target))
      throw std::invalid_argument("build_design: term references the target column");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index k = static_cast<Eigen::Index>(spec.terms.size());
  Eigen::MatrixXd X(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const TermSpec& t = spec.terms[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index i = rows[static_cast<std::size_t>(r)];
      switch (t.kind) {
        case TermSpec::Kind::intercept:
          X(r, c) = 1.0;
          break;
        case TermSpec::Kind::main:
          X(r, c) = completed(i, t.col_a);
          break;
        case TermSpec::Kind::interaction:
          X(r, c) = completed(i, t.col_a) * completed(i, t.col_b);
          break;
      }
    }
  }
  return X;
}

// ---- linear fits ---------------------------------------------------------------

LinearLsqFit linear_lsq(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        double condition_limit) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (y.size() != n) throw std::invalid_argument("linear_lsq: row count mismatch");
  if (k == 0) throw std::invalid_argument("linear_lsq: empty design");
  if (n < k) throw std::invalid_argument("linear_lsq: fewer rows than columns");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::MatrixXd R =
      qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const double r00 = std::abs(R(0, 0));
  const double rkk = std::abs(R(k - 1, k - 1));
  if (rkk == 0.0 || r00 / rkk > condition_limit) {
    // The pivoting pushes dependent columns to the back; report the original
    // column index of the collapsed pivot.
    const Eigen::Index bad = qr.colsPermutation().indices()(k - 1);
    throw SingularDesignError("linear_lsq: design column " + std::to_string(bad) +
                              " is linearly dependent (R diagonal ratio " +
                              std::to_string(rkk == 0.0 ? 0.0 : r00 / rkk) + ")");
  }

  LinearLsqFit fit;
  fit.beta_hat = qr.solve(y);
  fit.rss = (y - X * fit.beta_hat).squaredNorm();
  fit.n_rows = n;
  fit.n_cols = k;
  fit.r_factor = R;
  fit.permutation = qr.colsPermutation().indices();
  return fit;
}

Eigen::VectorXd linear_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return linear_lsq(X, y).beta_hat;
}

Eigen::VectorXd linear_beta_given_sigma(const LinearLsqFit& fit, double sigma2,
                                        RngStream& rng) {
  const Eigen::Index k = fit.n_cols;
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.normal();
  // With X P = Q R, (X^T X)^{-1} = P R^{-1} R^{-T} P^T, so a draw is
  // beta_hat + sigma * P R^{-1} z.
  Eigen::VectorXd w = fit.r_factor.triangularView<Eigen::Upper>().solve(z);
  Eigen::VectorXd delta(k);
  for (Eigen::Index i = 0; i < k; ++i) delta(fit.permutation(i)) = w(i);
  return fit.beta_hat + std::sqrt(sigma2) * delta;
}

LinearDraw linear_posterior_draw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 LinearPrior prior, RngStream& rng) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (n <= k + 2)
    throw std::invalid_argument("linear_posterior_draw: need rows > cols + 2");
  const LinearLsqFit fit = linear_lsq(X, y);
  const double df = prior == LinearPrior::jeffreys ? static_cast<double>(n - k)
                                                   : static_cast<double>(n - k - 2);
  // Guard a perfectly interpolating fit; the draw degenerates to the mean.
  LinearDraw draw;
  draw.sigma2 = fit.rss > 0.0 ? draw_scaled_inv_chisq(df, fit.rss / df, rng) : 0.0;
  draw.beta = linear_beta_given_sigma(fit, draw.sigma2, rng);
  return draw;
}

Eigen::VectorXd linear_impute(const Eigen::MatrixXd& X_mis, const LinearDraw& draw,
                              RngStream& rng) {
  if (X_mis.rows() > 0 && X_mis.cols() != draw.beta.size())
    throw std::invalid_argument("linear_impute: design/coefficient size mismatch");
  const double sd = std::sqrt(draw.sigma2);
  Eigen::VectorXd out(X_mis.rows());
  for (Eigen::Index i = 0; i < X_mis.rows(); ++i)
    out(i) = X_mis.row(i).dot(draw.beta) + sd * rng.normal();
  return out;
}

// ---- logistic fits --------------------------------------------------------------

LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         int max_iter, double grad_tol, double divergence_norm) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (y.size() != n) throw std::invalid_argument("logistic_fit: row count mismatch");
  bool has_zero = false;
  bool has_one = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) == 0.0) {
      has_zero = true;
    } else if (y(i) == 1.0) {
      has_one = true;
    } else {
      throw std::invalid_argument("logistic_fit: responses must be 0 or 1");
    }
  }
  if (!has_zero || !has_one)
    throw std::invalid_argument("logistic_fit: both response classes must be present");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  LogisticFit fit;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd p(n);
    Eigen::VectorXd w(n);
    double max_eta = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double eta = X.row(i).dot(beta);
      max_eta = std::max(max_eta, std::abs(eta));
      const double pi = logistic(eta);
      p(i) = pi;
      w(i) = pi * (1.0 - pi);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - p);
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    if (grad.lpNorm<Eigen::Infinity>() < grad_tol) {
      // A "converged" gradient with fitted probabilities saturated to 0/1 in
      // double precision means the likelihood is flat along a ray and the
      // MLE does not exist; the coefficient norm alone stalls far below the
      // divergence threshold in that regime.
      if (max_eta > 36.7)
        throw SeparationError(
            "logistic_fit: fitted probabilities saturated (max |eta| " +
            std::to_string(max_eta) + "); complete or quasi-complete separation");
      fit.beta_hat = beta;
      fit.fisher_info = info;
      fit.iterations = it;
      return fit;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw SingularDesignError("logistic_fit: Fisher information is singular");
    beta += ldlt.solve(grad);
    if (beta.norm() > divergence_norm)
      throw SeparationError("logistic_fit: coefficients diverged (norm " +
                            std::to_string(beta.norm()) +
                            "); complete or quasi-complete separation");
  }
  throw NumericError("logistic_fit: Newton-Raphson did not converge in " +
                     std::to_string(max_iter) + " iterations");
}

Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return logistic_fit(X, y).beta_hat;
}

LogisticDraw logistic_posterior_draw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     RngStream& rng) {
  const LogisticFit fit = logistic_fit(X, y);
  const Eigen::Index k = fit.beta_hat.size();
  // Asymptotic posterior: beta_hat + L^{-T} z with L L^T the Fisher info.
  Eigen::LLT<Eigen::MatrixXd> llt(fit.fisher_info);
  if (llt.info() != Eigen::Success)
    throw NumericError("logistic_posterior_draw: Fisher information not SPD");
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.normal();
  const Eigen::MatrixXd L = llt.matrixL();
  LogisticDraw draw;
  draw.beta = fit.beta_hat + L.transpose().triangularView<Eigen::Upper>().solve(z);
  return draw;
}

Eigen::VectorXd logistic_impute(const Eigen::MatrixXd& X_mis, const LogisticDraw& draw,
                                RngStream& rng) {
  if (X_mis.rows() > 0 && X_mis.cols() != draw.beta.size())
    throw std::invalid_argument("logistic_impute: design/coefficient size mismatch");
  Eigen::VectorXd out(X_mis.rows());
  for (Eigen::Index i = 0; i < X_mis.rows(); ++i)
    out(i) = static_cast<double>(draw_bernoulli(logistic(X_mis.row(i).dot(draw.beta)), rng));
  return out;
}

}  // namespace chainimp
