#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "chainimp/condmodels.hpp"

namespace chainimp {

/// Combined inference over m imputed datasets: pooled point estimate,
/// within/between variance split, and total variance
/// total = within + (1 + 1/m) between, componentwise.
struct CombinedEstimate {
  Eigen::VectorXd point;
  Eigen::VectorXd within_var;
  Eigen::VectorXd between_var;
  Eigen::VectorXd total_var;
  int m = 0;

  std::string to_json() const;
};

/// point = mean of estimates, within = mean of variances, between = sample
/// variance of estimates (divisor m - 1). m >= 2.
CombinedEstimate rubin_combine(std::span<const Eigen::VectorXd> estimates,
                               std::span<const Eigen::VectorXd> variances);

/// Maximum likelihood on the m*n stacked rows of the imputed datasets: the
/// finite-m approximation of the infinite-imputation pooled MLE.
Eigen::VectorXd stacked_mle(std::span<const Eigen::MatrixXd> imputed,
                            const ConditionalModelSpec& model);

/// Per-dataset MLE averaged across the m imputations. A failed per-dataset
/// fit fails the whole combination.
Eigen::VectorXd mean_of_estimates(std::span<const Eigen::MatrixXd> imputed,
                                  const ConditionalModelSpec& model);

/// Per-dataset MLEs (building block for both pooled estimators).
std::vector<Eigen::VectorXd> per_dataset_mles(std::span<const Eigen::MatrixXd> imputed,
                                              const ConditionalModelSpec& model);

}  // namespace chainimp
