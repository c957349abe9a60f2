#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chainimp/chains.hpp"
#include "chainimp/combine.hpp"
#include "chainimp/condmodels.hpp"
#include "chainimp/data.hpp"
#include "chainimp/diagnostics.hpp"

namespace chainimp {

/// Bivariate standard-normal data (zero mean, unit variance, correlation 0)
/// under the three-block missingness layout.
DataMatrix gen_exp1(Eigen::Index n_a, Eigen::Index n_b, Eigen::Index n_c, RngStream& rng);

/// Seven equicorrelated (0.4) standard normals x1..x7 plus
/// y ~ N(-2 + x1 + x2 + x3 + x4 - x5 - x6 - x7, 1); columns [y, x1..x7].
DataMatrix gen_exp2_complete(Eigen::Index n, RngStream& rng);
/// gen_exp2_complete with a 30% MCAR mask on every column.
DataMatrix gen_exp2(Eigen::Index n, RngStream& rng);

/// y1 ~ Bernoulli(0.45), y2 ~ Bernoulli(0.65) independent, and
/// x1..x5 | y ~ N(1*y1 + 0.5*y2, Sigma) with unit diagonal and 0.2
/// off-diagonal; columns [y1, y2, x1..x5].
DataMatrix gen_exp3_complete(Eigen::Index n, RngStream& rng);
/// gen_exp3_complete with a 30% MCAR mask on every column.
DataMatrix gen_exp3(Eigen::Index n, RngStream& rng);

/// Zero-mean conditional specs of the bivariate setting: x on y and y on x,
/// no intercept, with the given variance prior.
std::vector<ConditionalModelSpec> exp1_specs(LinearPrior prior);

/// Linear specs with intercept and main effects for every column of an
/// 8-column matrix (the seven-variable study), Jeffreys prior.
std::vector<ConditionalModelSpec> exp2_specs();

/// The incompatible-but-valid set: logistic models for y1 and y2 with two
/// product terms each, main-effects linear models for x1..x5.
std::vector<ConditionalModelSpec> exp3_specs();

/// Default per-variable specs for user data: each incomplete column on all
/// others (intercept + main effects), logistic for binary targets, linear
/// with Jeffreys prior otherwise.
std::vector<ConditionalModelSpec> default_specs(const DataMatrix& dm);

enum class ImputeMethod { iterative, joint };

/// m completed copies of dm: burn_in sweeps, then a snapshot every thin
/// sweeps. specs are required for the iterative method and ignored for the
/// joint (data-augmentation) method.
std::vector<Eigen::MatrixXd> multiple_impute(const DataMatrix& dm, ImputeMethod method,
                                             std::span<const ConditionalModelSpec> specs,
                                             int m, long burn_in, long thin,
                                             RngStream& rng);

struct ExperimentConfig {
  int id = 1;
  std::uint64_t seed = 1;
  // Three-block sizes (bivariate study).
  Eigen::Index n_a = 200;
  Eigen::Index n_b = 80;
  Eigen::Index n_c = 80;
  // Sample size (seven-variable and incompatible studies).
  Eigen::Index n = 1000;
  // Replication (incompatible study).
  int replicates = 200;
  int m = 20;
  double mcar_rate = 0.3;
  long kernel_sweeps = 1000;
  ChainConfig chain;
  int workers = 0;  // 0 = hardware concurrency
  std::string out_dir = "out";
  std::optional<std::vector<ConditionalModelSpec>> model_override;

  void validate() const;
};

ExperimentConfig experiment_defaults(int id);
std::string config_to_json(const ExperimentConfig& cfg);
/// Parses overrides on top of experiment_defaults(id from the file).
ExperimentConfig config_from_json(const std::string& json_text);

struct Exp1Result {
  bool kernel_identity = false;
  long kernel_sweeps = 0;
  KsResult ks_beta_x, ks_beta_y;
  TvEstimate tv_beta_x, tv_beta_y;
  TraceSet traces;  // beta_[xy]_iterative and beta_[xy]_joint
};
Exp1Result run_exp1(const ExperimentConfig& cfg);

struct Exp2Result {
  std::vector<std::string> coef_names;
  std::vector<KsResult> ks_per_coef;
  TraceSet traces;  // <coef>_iterative and <coef>_joint
};
Exp2Result run_exp2(const ExperimentConfig& cfg);

struct Exp3Result {
  std::vector<std::string> coef_names;  // includes the intercept first
  Eigen::VectorXd truth;
  Eigen::MatrixXd replicate_estimates;  // replicates x coefficients
  Eigen::VectorXd mean_estimate;
  Eigen::VectorXd mc_se;  // standard error of the replicate mean
};
Exp3Result run_exp3(const ExperimentConfig& cfg);

/// Runs the configured experiment and writes config.json, traces/estimates
/// CSVs, Q-Q CSVs, and summary.json under out_dir/exp<id>/. Every report
/// embeds the resolved config, so re-running it reproduces the outputs.
void run_experiment(const ExperimentConfig& cfg);

}  // namespace chainimp
