#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "chainimp/condmodels.hpp"
#include "chainimp/data.hpp"
#include "chainimp/rng.hpp"

namespace chainimp {

/// One chain's working state: a completed copy of the data (every cell
/// finite), the original presence mask, the latest parameter draw per
/// variable, and an iteration counter. Cells with mask=true must equal the
/// original observed values bitwise at every iteration.
struct ChainState {
  Eigen::MatrixXd data;
  BoolMask mask;
  std::vector<std::string> col_names;
  std::vector<ColKind> col_kinds;

  using VarDraw = std::variant<std::monostate, LinearDraw, LogisticDraw>;
  std::vector<VarDraw> draws;

  // Latest joint-model draw, populated by joint-Gaussian sweeps only.
  Eigen::VectorXd joint_mu;
  Eigen::MatrixXd joint_sigma;

  long iter = 0;

  Eigen::Index n_rows() const { return data.rows(); }
  Eigen::Index n_cols() const { return data.cols(); }

  /// Row indices of missing cells in column j, ascending.
  std::vector<Eigen::Index> missing_rows(Eigen::Index j) const;
};

struct ChainConfig {
  long n_iter = 0;
  long burn_in = 0;
  long thin = 1;
  int n_chains = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Recorded values of monitored statistics: one sequence per (chain,
/// statistic), equal length across chains.
struct TraceSet {
  std::vector<std::string> stat_names;
  // values[chain][stat][record]
  std::vector<std::vector<std::vector<double>>> values;

  int n_chains() const { return static_cast<int>(values.size()); }
  std::size_t n_records() const;
  Eigen::Index stat_index(std::string_view name) const;
  std::span<const double> trace(int chain, std::string_view name) const;

  /// Pools one statistic across all chains into a single sample.
  std::vector<double> pooled(std::string_view name) const;

  /// CSV with columns chain,iter,statistic,value. iter is the recorded
  /// post-burn-in iteration index.
  void write_csv(const std::string& path) const;
  static TraceSet read_csv(const std::string& path);
};

/// A monitor maps the chain state to one or more named scalars; monitors
/// that share work (e.g. all coefficients of one regression) emit a block
/// of statistics from a single evaluation.
struct Monitor {
  std::vector<std::string> names;
  std::function<std::vector<double>(const ChainState&)> eval;

  static Monitor scalar(std::string name, std::function<double(const ChainState&)> fn);
};

using SweepFn = std::function<void(ChainState&, RngStream&)>;

/// Completed starting state: each missing cell is filled by resampling that
/// column's observed values (hot-deck marginal draw).
ChainState init_state(const DataMatrix& dm, RngStream& rng);

/// One pass of chained-equation imputation: for each spec in order, fit the
/// model on the rows where the target is observed (covariates carry the
/// current imputations), draw its parameters from the posterior, then redraw
/// that column's missing cells from the predictive. Later steps see earlier
/// steps' fresh imputations.
void iterative_sweep(ChainState& state, std::span<const ConditionalModelSpec> specs,
                     RngStream& rng);

/// Applies sweep n_iter times, recording monitors every thin-th iteration
/// after burn_in. Deterministic given (state, rng). If flush_path is
/// nonempty and a sweep throws, the partial trace is written there before
/// the error is rethrown with the failing iteration index.
TraceSet run_chain(ChainState& state, const SweepFn& sweep, const ChainConfig& cfg,
                   std::span<const Monitor> monitors, RngStream& rng,
                   const std::string& flush_path = {});

/// n_chains independent runs from independently initialized states on
/// disjoint substreams of the base stream.
TraceSet run_parallel_chains(const DataMatrix& dm, const SweepFn& sweep,
                             const ChainConfig& cfg, std::span<const Monitor> monitors,
                             const RngStream& base);

/// Chain checkpoint: state, mask, RNG position, and iteration, as JSON.
void save_checkpoint(const ChainState& state, const RngStream& rng,
                     const std::string& path);
std::pair<ChainState, RngStream> load_checkpoint(const std::string& path);

}  // namespace chainimp
