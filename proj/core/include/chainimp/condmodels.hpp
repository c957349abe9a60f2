#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chainimp/data.hpp"
#include "chainimp/rng.hpp"

namespace chainimp {

/// One design-matrix column: an intercept, a main effect, or a two-column
/// product term.
struct TermSpec {
  enum class Kind { intercept, main, interaction };

  Kind kind = Kind::intercept;
  Eigen::Index col_a = -1;  // main effect or first interaction column
  Eigen::Index col_b = -1;  // second interaction column

  static TermSpec intercept() { return {Kind::intercept, -1, -1}; }
  static TermSpec main(Eigen::Index col) { return {Kind::main, col, -1}; }
  static TermSpec interaction(Eigen::Index a, Eigen::Index b) {
    return {Kind::interaction, a, b};
  }

  bool operator==(const TermSpec&) const = default;
};

enum class Family { linear, logistic };
enum class LinearPrior { jeffreys, flat };

/// One variable's imputation model: target column, family, term list, and
/// (for the linear family) the variance prior. Dropping every interaction
/// term gives the model's main-effects-only reduction.
struct ConditionalModelSpec {
  Eigen::Index target = -1;
  Family family = Family::linear;
  std::vector<TermSpec> terms;
  LinearPrior prior = LinearPrior::jeffreys;

  /// Same spec with all interaction terms removed.
  ConditionalModelSpec without_interactions() const;

  /// Structural checks: target in range, no term references the target,
  /// interaction columns distinct, logistic target is binary.
  void validate(Eigen::Index n_cols, const std::vector<ColKind>& kinds) const;
};

/// JSON round trip for one spec, e.g.
///   {"target":"y1","family":"logistic","terms":["1","y2","x1","x1*y2"]}
/// Terms are "1" (intercept), a column name, or "a*b".
std::string spec_to_json(const ConditionalModelSpec& spec,
                         const std::vector<std::string>& col_names);
ConditionalModelSpec spec_from_json(const std::string& json_text,
                                    const std::vector<std::string>& col_names);
std::string specs_to_json(std::span<const ConditionalModelSpec> specs,
                          const std::vector<std::string>& col_names);
std::vector<ConditionalModelSpec> specs_from_json(const std::string& json_text,
                                                  const std::vector<std::string>& col_names);

struct LinearDraw {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
};

struct LogisticDraw {
  Eigen::VectorXd beta;
};

/// Design matrix (one column per term, in spec order) and response vector
/// over the given rows of a completed data matrix.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> build_design(
    const Eigen::MatrixXd& completed, const ConditionalModelSpec& spec,
    std::span<const Eigen::Index> rows);

/// Design rows only (no response), for predicting at missing slots.
Eigen::MatrixXd build_design_rows(const Eigen::MatrixXd& completed,
                                  const ConditionalModelSpec& spec,
                                  std::span<const Eigen::Index> rows);

/// Least-squares fit by column-pivoted QR with a condition-number guard.
/// Kept public because the posterior draw, the plain MLE, and the stacked
/// estimators all share it.
struct LinearLsqFit {
  Eigen::VectorXd beta_hat;
  double rss = 0.0;
  Eigen::Index n_rows = 0;
  Eigen::Index n_cols = 0;
  // R factor and column permutation from the pivoted QR of X, with
  // X * P = Q * R; enough to reconstruct (X^T X)^{-1} without forming it.
  Eigen::MatrixXd r_factor;
  Eigen::VectorXi permutation;
};
LinearLsqFit linear_lsq(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        double condition_limit = 1e12);

/// Ordinary least-squares coefficients (throws SingularDesignError on
/// dependent columns).
Eigen::VectorXd linear_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// sigma2 ~ scaled-inv-chisq(df, RSS/df) with df = n - k (jeffreys) or
/// n - k - 2 (flat), then beta | sigma2 ~ Normal(beta_hat, sigma2 (X^T X)^{-1}).
LinearDraw linear_posterior_draw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 LinearPrior prior, RngStream& rng);

/// beta | sigma2 leg of the posterior draw, exposed for direct checks of the
/// conditional law.
Eigen::VectorXd linear_beta_given_sigma(const LinearLsqFit& fit, double sigma2,
                                        RngStream& rng);

/// Each imputed value is design row . beta + Normal(0, sigma2).
Eigen::VectorXd linear_impute(const Eigen::MatrixXd& X_mis, const LinearDraw& draw,
                              RngStream& rng);

/// Newton-Raphson logistic MLE with Fisher information at the optimum.
struct LogisticFit {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd fisher_info;  // X^T W X at the MLE
  int iterations = 0;
};
LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         int max_iter = 50, double grad_tol = 1e-8,
                         double divergence_norm = 1e4);

Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// MLE plus a Gaussian asymptotic-posterior perturbation: beta_hat + L z with
/// L L^T the inverse observed Fisher information at the MLE.
LogisticDraw logistic_posterior_draw(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     RngStream& rng);

/// Each imputed value ~ Bernoulli(logistic(design row . beta)).
Eigen::VectorXd logistic_impute(const Eigen::MatrixXd& X_mis, const LogisticDraw& draw,
                                RngStream& rng);

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace chainimp
