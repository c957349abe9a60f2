#include "chainimp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "chainimp/jointgauss.hpp"

namespace chainimp {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- data generators ---------------------------------------------------------

DataMatrix gen_exp1(Eigen::Index n_a, Eigen::Index n_b, Eigen::Index n_c,
                    RngStream& rng) {
  if (n_a < 0 || n_b < 0 || n_c < 0 || n_a + n_b + n_c <= 0)
    throw std::invalid_argument("gen_exp1: block sizes must be nonnegative, total positive");
  const Eigen::Index n = n_a + n_b + n_c;
  Eigen::MatrixXd values(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    values(i, 0) = rng.normal();
    values(i, 1) = rng.normal();
  }
  DataMatrix complete = DataMatrix::from_values(std::move(values), {"x", "y"});
  return bivariate_pattern({n_a, n_b, n_c}, complete);
}

DataMatrix gen_exp2_complete(Eigen::Index n, RngStream& rng) {
  if (n <= 50) throw std::invalid_argument("gen_exp2: need n > 50");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(7, 7, 0.4);
  sigma.diagonal().setOnes();
  const Eigen::MatrixXd L = psd_cholesky(sigma);

  Eigen::MatrixXd values(n, 8);
  Eigen::VectorXd z(7);
  const Eigen::VectorXd weights = (Eigen::VectorXd(7) << 1, 1, 1, 1, -1, -1, -1).finished();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 7; ++j) z(j) = rng.normal();
    const Eigen::VectorXd x = L * z;
    values(i, 0) = -2.0 + weights.dot(x) + rng.normal();
    values.row(i).tail(7) = x.transpose();
  }
  return DataMatrix::from_values(std::move(values),
                                 {"y", "x1", "x2", "x3", "x4", "x5", "x6", "x7"});
}

DataMatrix gen_exp2(Eigen::Index n, RngStream& rng) {
  const DataMatrix complete = gen_exp2_complete(n, rng);
  return mcar_mask(complete, 0.3, rng);
}

DataMatrix gen_exp3_complete(Eigen::Index n, RngStream& rng) {
  if (n <= 100) throw std::invalid_argument("gen_exp3: need n > 100");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(5, 5, 0.2);
  sigma.diagonal().setOnes();
  const Eigen::MatrixXd L = psd_cholesky(sigma);

  Eigen::MatrixXd values(n, 7);
  Eigen::VectorXd z(5);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y1 = static_cast<double>(draw_bernoulli(0.45, rng));
    const double y2 = static_cast<double>(draw_bernoulli(0.65, rng));
    for (Eigen::Index j = 0; j < 5; ++j) z(j) = rng.normal();
    const Eigen::VectorXd x =
        Eigen::VectorXd::Constant(5, 1.0 * y1 + 0.5 * y2) + L * z;
    values(i, 0) = y1;
    values(i, 1) = y2;
    values.row(i).tail(5) = x.transpose();
  }
  return DataMatrix::from_values(std::move(values),
                                 {"y1", "y2", "x1", "x2", "x3", "x4", "x5"});
}

DataMatrix gen_exp3(Eigen::Index n, RngStream& rng) {
  const DataMatrix complete = gen_exp3_complete(n, rng);
  return mcar_mask(complete, 0.3, rng);
}

// ---- model spec presets --------------------------------------------------------

std::vector<ConditionalModelSpec> exp1_specs(LinearPrior prior) {
  ConditionalModelSpec x_on_y{0, Family::linear, {TermSpec::main(1)}, prior};
  ConditionalModelSpec y_on_x{1, Family::linear, {TermSpec::main(0)}, prior};
  return {x_on_y, y_on_x};
}

std::vector<ConditionalModelSpec> exp2_specs() {
  std::vector<ConditionalModelSpec> specs;
  for (Eigen::Index target = 0; target < 8; ++target) {
    ConditionalModelSpec s;
    s.target = target;
    s.family = Family::linear;
    s.prior = LinearPrior::jeffreys;
    s.terms.push_back(TermSpec::intercept());
    for (Eigen::Index j = 0; j < 8; ++j)
      if (j != target) s.terms.push_back(TermSpec::main(j));
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<ConditionalModelSpec> exp3_specs() {
  // Columns: 0=y1, 1=y2, 2..6=x1..x5.
  std::vector<ConditionalModelSpec> specs;
  {
    ConditionalModelSpec y1{0, Family::logistic, {}, LinearPrior::jeffreys};
    y1.terms.push_back(TermSpec::intercept());
    y1.terms.push_back(TermSpec::main(1));
    for (Eigen::Index j = 2; j <= 6; ++j) y1.terms.push_back(TermSpec::main(j));
    y1.terms.push_back(TermSpec::interaction(2, 1));  // x1*y2
    y1.terms.push_back(TermSpec::interaction(3, 1));  // x2*y2
    specs.push_back(std::move(y1));
  }
  {
    ConditionalModelSpec y2{1, Family::logistic, {}, LinearPrior::jeffreys};
    y2.terms.push_back(TermSpec::intercept());
    y2.terms.push_back(TermSpec::main(0));
    for (Eigen::Index j = 2; j <= 6; ++j) y2.terms.push_back(TermSpec::main(j));
    y2.terms.push_back(TermSpec::interaction(2, 0));  // x1*y1
    y2.terms.push_back(TermSpec::interaction(3, 0));  // x2*y1
    specs.push_back(std::move(y2));
  }
  for (Eigen::Index target = 2; target <= 6; ++target) {
    ConditionalModelSpec s{target, Family::linear, {}, LinearPrior::jeffreys};
    s.terms.push_back(TermSpec::intercept());
    s.terms.push_back(TermSpec::main(0));
    s.terms.push_back(TermSpec::main(1));
    for (Eigen::Index j = 2; j <= 6; ++j)
      if (j != target) s.terms.push_back(TermSpec::main(j));
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<ConditionalModelSpec> default_specs(const DataMatrix& dm) {
  std::vector<ConditionalModelSpec> specs;
  for (Eigen::Index target = 0; target < dm.n_cols(); ++target) {
    bool any_missing = false;
    for (Eigen::Index i = 0; i < dm.n_rows() && !any_missing; ++i)
      any_missing = !dm.present(i, target);
    if (!any_missing) continue;
    ConditionalModelSpec s;
    s.target = target;
    s.family = dm.col_kinds[static_cast<std::size_t>(target)] == ColKind::binary
                   ? Family::logistic
                   : Family::linear;
    s.prior = LinearPrior::jeffreys;
    s.terms.push_back(TermSpec::intercept());
    for (Eigen::Index j = 0; j < dm.n_cols(); ++j)
      if (j != target) s.terms.push_back(TermSpec::main(j));
    specs.push_back(std::move(s));
  }
  return specs;
}

// ---- multiple imputation -------------------------------------------------------

std::vector<Eigen::MatrixXd> multiple_impute(const DataMatrix& dm, ImputeMethod method,
                                             std::span<const ConditionalModelSpec> specs,
                                             int m, long burn_in, long thin,
                                             RngStream& rng) {
  if (m < 1) throw std::invalid_argument("multiple_impute: m must be >= 1");
  if (burn_in < 0 || thin < 1)
    throw std::invalid_argument("multiple_impute: bad burn_in/thin");
  if (method == ImputeMethod::iterative && specs.empty())
    throw std::invalid_argument("multiple_impute: iterative method requires specs");

  ChainState state = init_state(dm, rng);
  auto sweep = [&](ChainState& s, RngStream& r) {
    if (method == ImputeMethod::iterative) {
      iterative_sweep(s, specs, r);
    } else {
      da_sweep(s, r);
    }
  };
  for (long it = 0; it < burn_in; ++it) sweep(state, rng);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (long t = 0; t < thin; ++t) sweep(state, rng);
    out.push_back(state.data);
  }
  return out;
}

// ---- config ---------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (id < 1 || id > 3) throw std::invalid_argument("ExperimentConfig: id must be 1, 2, or 3");
  if (n_a < 0 || n_b < 0 || n_c < 0)
    throw std::invalid_argument("ExperimentConfig: block sizes must be nonnegative");
  if (n <= 0) throw std::invalid_argument("ExperimentConfig: n must be positive");
  if (replicates < 1 || m < 1)
    throw std::invalid_argument("ExperimentConfig: replicates and m must be positive");
  if (!(mcar_rate >= 0.0 && mcar_rate < 1.0))
    throw std::invalid_argument("ExperimentConfig: mcar_rate must be in [0, 1)");
  if (kernel_sweeps < 1)
    throw std::invalid_argument("ExperimentConfig: kernel_sweeps must be positive");
  chain.validate();
}

ExperimentConfig experiment_defaults(int id) {
  ExperimentConfig cfg;
  cfg.id = id;
  cfg.seed = 1;
  switch (id) {
    case 1:
      // Long single chains at thin 1; the comparison wants raw iterations.
      cfg.chain = {1000 + 200000, 1000, 1, 1, 1};
      cfg.kernel_sweeps = 1000;
      break;
    case 2:
      cfg.n = 1000;
      cfg.chain = {1000 + 10000 * 10, 1000, 10, 1, 1};
      break;
    case 3:
      cfg.n = 2000;
      cfg.replicates = 200;
      cfg.m = 20;
      cfg.chain = {1000 + 20 * 10, 1000, 10, 1, 1};
      break;
    default:
      throw std::invalid_argument("experiment_defaults: id must be 1, 2, or 3");
  }
  return cfg;
}

namespace {

std::vector<std::string> experiment_column_names(int id) {
  switch (id) {
    case 1:
      return {"x", "y"};
    case 2:
      return {"y", "x1", "x2", "x3", "x4", "x5", "x6", "x7"};
    default:
      return {"y1", "y2", "x1", "x2", "x3", "x4", "x5"};
  }
}

json chain_to_json(const ChainConfig& c) {
  return json{{"n_iter", c.n_iter},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"n_chains", c.n_chains}};
}

json config_to_json_obj(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.id;
  j["seed"] = cfg.seed;
  j["n_a"] = cfg.n_a;
  j["n_b"] = cfg.n_b;
  j["n_c"] = cfg.n_c;
  j["n"] = cfg.n;
  j["replicates"] = cfg.replicates;
  j["m"] = cfg.m;
  j["mcar_rate"] = cfg.mcar_rate;
  j["kernel_sweeps"] = cfg.kernel_sweeps;
  j["chain"] = chain_to_json(cfg.chain);
  j["workers"] = cfg.workers;
  j["out_dir"] = cfg.out_dir;
  if (cfg.model_override) {
    j["models"] = json::parse(
        specs_to_json(*cfg.model_override, experiment_column_names(cfg.id)))["models"];
  }
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

ExperimentConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  const int id = j.value("experiment", 1);
  ExperimentConfig cfg = experiment_defaults(id);
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("n_a")) cfg.n_a = j.at("n_a").get<Eigen::Index>();
  if (j.contains("n_b")) cfg.n_b = j.at("n_b").get<Eigen::Index>();
  if (j.contains("n_c")) cfg.n_c = j.at("n_c").get<Eigen::Index>();
  if (j.contains("n")) cfg.n = j.at("n").get<Eigen::Index>();
  if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
  if (j.contains("m")) cfg.m = j.at("m").get<int>();
  if (j.contains("mcar_rate")) cfg.mcar_rate = j.at("mcar_rate").get<double>();
  if (j.contains("kernel_sweeps")) cfg.kernel_sweeps = j.at("kernel_sweeps").get<long>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("chain")) {
    const json& c = j.at("chain");
    if (c.contains("n_iter")) cfg.chain.n_iter = c.at("n_iter").get<long>();
    if (c.contains("burn_in")) cfg.chain.burn_in = c.at("burn_in").get<long>();
    if (c.contains("thin")) cfg.chain.thin = c.at("thin").get<long>();
    if (c.contains("n_chains")) cfg.chain.n_chains = c.at("n_chains").get<int>();
  }
  if (j.contains("models")) {
    json wrapper;
    wrapper["models"] = j.at("models");
    const auto names = experiment_column_names(id);
    std::vector<ColKind> kinds(names.size(), ColKind::continuous);
    if (id == 3) kinds[0] = kinds[1] = ColKind::binary;
    auto specs = specs_from_json(wrapper.dump(), names);
    for (const auto& s : specs)
      s.validate(static_cast<Eigen::Index>(names.size()), kinds);
    cfg.model_override = std::move(specs);
  }
  cfg.validate();
  return cfg;
}

// ---- experiment drivers ----------------------------------------------------------

namespace {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TraceSet merge_engine_traces(const TraceSet& iter, const TraceSet& joint) {
  TraceSet merged;
  for (const auto& s : iter.stat_names) merged.stat_names.push_back(s + "_iterative");
  for (const auto& s : joint.stat_names) merged.stat_names.push_back(s + "_joint");
  merged.values.resize(1);
  for (const auto& v : iter.values.front()) merged.values[0].push_back(v);
  for (const auto& v : joint.values.front()) merged.values[0].push_back(v);
  return merged;
}

}  // namespace

Exp1Result run_exp1(const ExperimentConfig& cfg) {
  cfg.validate();
  const RngStream base(cfg.seed);
  const BivariatePattern pat{cfg.n_a, cfg.n_b, cfg.n_c};

  RngStream data_rng = base.fork("data");
  const DataMatrix dm = gen_exp1(cfg.n_a, cfg.n_b, cfg.n_c, data_rng);

  Exp1Result result;
  result.kernel_sweeps = cfg.kernel_sweeps;

  // Matched-seed kernel identity: flat-prior iterative sweep against the
  // joint-model bivariate sweep, same init, same stream.
  {
    RngStream init_rng = base.fork("kernel-init");
    ChainState sa = init_state(dm, init_rng);
    ChainState sb = sa;
    RngStream ra = base.fork("kernel-sweeps");
    RngStream rb = ra;
    const std::vector<ConditionalModelSpec> flat = exp1_specs(LinearPrior::flat);
    result.kernel_identity = true;
    for (long k = 0; k < cfg.kernel_sweeps; ++k) {
      iterative_sweep(sa, flat, ra);
      bivariate_gibbs_sweep(sb, pat, rb);
      if (!same_bits(sa.data, sb.data)) {
        result.kernel_identity = false;
        break;
      }
    }
  }

  // Distribution comparison: Jeffreys iterative chain vs the joint chain.
  const Monitor mon{{"beta_x", "beta_y"}, [pat](const ChainState& s) {
                      const auto [bx, by] = monitored_betas(s, pat);
                      return std::vector<double>{bx, by};
                    }};
  const std::vector<ConditionalModelSpec> jeffreys = exp1_specs(LinearPrior::jeffreys);

  TraceSet iter_traces, joint_traces;
  std::exception_ptr err_a, err_b;
  std::thread t_iter([&] {
    try {
      RngStream rng = base.fork("iterative");
      ChainState s = init_state(dm, rng);
      iter_traces = run_chain(
          s, [&jeffreys](ChainState& st, RngStream& r) { iterative_sweep(st, jeffreys, r); },
          cfg.chain, {&mon, 1}, rng);
    } catch (...) {
      err_a = std::current_exception();
    }
  });
  std::thread t_joint([&] {
    try {
      RngStream rng = base.fork("joint");
      ChainState s = init_state(dm, rng);
      joint_traces = run_chain(
          s, [&pat](ChainState& st, RngStream& r) { bivariate_gibbs_sweep(st, pat, r); },
          cfg.chain, {&mon, 1}, rng);
    } catch (...) {
      err_b = std::current_exception();
    }
  });
  t_iter.join();
  t_joint.join();
  if (err_a) std::rethrow_exception(err_a);
  if (err_b) std::rethrow_exception(err_b);

  const std::vector<double> bx_i = iter_traces.pooled("beta_x");
  const std::vector<double> bx_j = joint_traces.pooled("beta_x");
  const std::vector<double> by_i = iter_traces.pooled("beta_y");
  const std::vector<double> by_j = joint_traces.pooled("beta_y");
  result.ks_beta_x = ks_two_sample(bx_i, bx_j);
  result.ks_beta_y = ks_two_sample(by_i, by_j);
  result.tv_beta_x = binned_tv(bx_i, bx_j, 50);
  result.tv_beta_y = binned_tv(by_i, by_j, 50);
  result.traces = merge_engine_traces(iter_traces, joint_traces);
  return result;
}

namespace {

// Monitor emitting the least-squares coefficients of column 0 on all other
// columns (with intercept) from the completed data.
Monitor regression_monitor(Eigen::Index n_cols, const std::vector<std::string>& col_names) {
  ConditionalModelSpec analysis;
  analysis.target = 0;
  analysis.family = Family::linear;
  analysis.terms.push_back(TermSpec::intercept());
  for (Eigen::Index j = 1; j < n_cols; ++j) analysis.terms.push_back(TermSpec::main(j));

  Monitor mon;
  mon.names.push_back("b_intercept");
  for (Eigen::Index j = 1; j < n_cols; ++j) mon.names.push_back("b_" + col_names[static_cast<std::size_t>(j)]);
  mon.eval = [analysis](const ChainState& s) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(s.n_rows()));
    std::iota(rows.begin(), rows.end(), 0);
    const auto [X, y] = build_design(s.data, analysis, rows);
    const Eigen::VectorXd beta = linear_mle(X, y);
    return std::vector<double>(beta.begin(), beta.end());
  };
  return mon;
}

}  // namespace

Exp2Result run_exp2(const ExperimentConfig& cfg) {
  cfg.validate();
  const RngStream base(cfg.seed);
  RngStream data_rng = base.fork("data");
  const DataMatrix dm = gen_exp2(cfg.n, data_rng);

  const Monitor mon = regression_monitor(dm.n_cols(), dm.col_names);
  const std::vector<ConditionalModelSpec> specs =
      cfg.model_override ? *cfg.model_override : exp2_specs();

  TraceSet iter_traces, joint_traces;
  std::exception_ptr err_a, err_b;
  std::thread t_iter([&] {
    try {
      RngStream rng = base.fork("iterative");
      ChainState s = init_state(dm, rng);
      iter_traces = run_chain(
          s, [&specs](ChainState& st, RngStream& r) { iterative_sweep(st, specs, r); },
          cfg.chain, {&mon, 1}, rng);
    } catch (...) {
      err_a = std::current_exception();
    }
  });
  std::thread t_joint([&] {
    try {
      RngStream rng = base.fork("joint");
      ChainState s = init_state(dm, rng);
      joint_traces = run_chain(
          s, [](ChainState& st, RngStream& r) { da_sweep(st, r); }, cfg.chain, {&mon, 1},
          rng);
    } catch (...) {
      err_b = std::current_exception();
    }
  });
  t_iter.join();
  t_joint.join();
  if (err_a) std::rethrow_exception(err_a);
  if (err_b) std::rethrow_exception(err_b);

  Exp2Result result;
  result.coef_names = mon.names;
  for (const auto& name : mon.names) {
    result.ks_per_coef.push_back(
        ks_two_sample(iter_traces.pooled(name), joint_traces.pooled(name)));
  }
  result.traces = merge_engine_traces(iter_traces, joint_traces);
  return result;
}

Exp3Result run_exp3(const ExperimentConfig& cfg) {
  cfg.validate();
  const RngStream base(cfg.seed);
  const std::vector<ConditionalModelSpec> specs =
      cfg.model_override ? *cfg.model_override : exp3_specs();

  // Analysis model: x1 on (intercept, y1, y2, x2..x5); columns 0=y1 1=y2 2=x1.
  ConditionalModelSpec analysis;
  analysis.target = 2;
  analysis.family = Family::linear;
  analysis.terms = {TermSpec::intercept(), TermSpec::main(0), TermSpec::main(1),
                    TermSpec::main(3),     TermSpec::main(4), TermSpec::main(5),
                    TermSpec::main(6)};

  const int n_coef = static_cast<int>(analysis.terms.size());
  Exp3Result result;
  result.coef_names = {"(intercept)", "y1", "y2", "x2", "x3", "x4", "x5"};
  result.truth = (Eigen::VectorXd(7) << 0.0, 0.5, 0.25, 0.125, 0.125, 0.125, 0.125).finished();
  result.replicate_estimates.resize(cfg.replicates, n_coef);

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.replicates));
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.replicates) return;
      try {
        RngStream rng = base.fork("replicate").fork(static_cast<std::uint64_t>(r));
        const DataMatrix dm = gen_exp3(cfg.n, rng);
        RngStream chain_rng = rng.fork("chain");
        const std::vector<Eigen::MatrixXd> imputed =
            multiple_impute(dm, ImputeMethod::iterative, specs, cfg.m, cfg.chain.burn_in,
                            cfg.chain.thin, chain_rng);
        const Eigen::VectorXd combined = mean_of_estimates(imputed, analysis);
        result.replicate_estimates.row(r) = combined.transpose();
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };

  const int n_workers = std::min(resolve_workers(cfg.workers), cfg.replicates);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (int r = 0; r < cfg.replicates; ++r) {
    if (errors[static_cast<std::size_t>(r)]) {
      try {
        std::rethrow_exception(errors[static_cast<std::size_t>(r)]);
      } catch (const std::exception& e) {
        throw NumericError("run_exp3: replicate " + std::to_string(r) + ": " + e.what());
      }
    }
  }

  result.mean_estimate = result.replicate_estimates.colwise().mean();
  result.mc_se.resize(n_coef);
  const double reps = static_cast<double>(cfg.replicates);
  for (int c = 0; c < n_coef; ++c) {
    const Eigen::VectorXd col = result.replicate_estimates.col(c);
    const double mean = result.mean_estimate(c);
    const double var = (col.array() - mean).square().sum() / (reps - 1.0);
    result.mc_se(c) = std::sqrt(var / reps);
  }
  return result;
}

// ---- report emission --------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("run_experiment: cannot open '" + path.string() + "'");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw IoError("run_experiment: write failed for '" + path.string() + "'");
}

json ks_to_json(const KsResult& ks) {
  return json{{"statistic", ks.statistic}, {"n_a", ks.n_a}, {"n_b", ks.n_b}};
}

json tv_to_json(const TvEstimate& tv) {
  return json{{"value", tv.value},
              {"n_bins", tv.n_bins},
              {"n_a", tv.n_a},
              {"n_b", tv.n_b},
              {"degenerate_range", tv.degenerate_range}};
}

void run_experiment_cell(const ExperimentConfig& cfg, const fs::path& dir) {
  json summary;
  summary["config"] = json::parse(config_to_json(cfg));

  if (cfg.id == 1) {
    const Exp1Result r = run_exp1(cfg);
    r.traces.write_csv((dir / "traces.csv").string());
    const int k = static_cast<int>(std::min<std::size_t>(99, r.traces.n_records()));
    const auto qx = qq_points(r.traces.pooled("beta_x_iterative"),
                              r.traces.pooled("beta_x_joint"), k);
    write_qq_csv(qx, k, (dir / "qq_beta_x.csv").string());
    const auto qy = qq_points(r.traces.pooled("beta_y_iterative"),
                              r.traces.pooled("beta_y_joint"), k);
    write_qq_csv(qy, k, (dir / "qq_beta_y.csv").string());
    summary["kernel_identity"] = r.kernel_identity;
    summary["kernel_sweeps"] = r.kernel_sweeps;
    summary["ks_beta_x"] = ks_to_json(r.ks_beta_x);
    summary["ks_beta_y"] = ks_to_json(r.ks_beta_y);
    summary["tv_beta_x"] = tv_to_json(r.tv_beta_x);
    summary["tv_beta_y"] = tv_to_json(r.tv_beta_y);
  } else if (cfg.id == 2) {
    const Exp2Result r = run_exp2(cfg);
    r.traces.write_csv((dir / "traces.csv").string());
    const int k = static_cast<int>(std::min<std::size_t>(99, r.traces.n_records()));
    json ks = json::object();
    for (std::size_t c = 0; c < r.coef_names.size(); ++c) {
      const std::string& name = r.coef_names[c];
      ks[name] = ks_to_json(r.ks_per_coef[c]);
      const auto q = qq_points(r.traces.pooled(name + "_iterative"),
                               r.traces.pooled(name + "_joint"), k);
      write_qq_csv(q, k, (dir / ("qq_" + name + ".csv")).string());
    }
    summary["ks_per_coefficient"] = std::move(ks);
  } else {
    const Exp3Result r = run_exp3(cfg);
    {
      std::ofstream out(dir / "estimates.csv", std::ios::binary);
      if (!out) throw IoError("run_experiment: cannot open estimates.csv");
      out << "replicate";
      for (const auto& name : r.coef_names) out << ',' << name;
      out << '\n';
      char buf[64];
      for (Eigen::Index i = 0; i < r.replicate_estimates.rows(); ++i) {
        out << i;
        for (Eigen::Index c = 0; c < r.replicate_estimates.cols(); ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", r.replicate_estimates(i, c));
          out << ',' << buf;
        }
        out << '\n';
      }
    }
    json table = json::array();
    for (std::size_t c = 0; c < r.coef_names.size(); ++c) {
      table.push_back(json{{"coefficient", r.coef_names[c]},
                           {"truth", r.truth(static_cast<Eigen::Index>(c))},
                           {"mean", r.mean_estimate(static_cast<Eigen::Index>(c))},
                           {"mc_se", r.mc_se(static_cast<Eigen::Index>(c))}});
    }
    summary["coefficients"] = std::move(table);
  }

  write_text(dir / "summary.json", summary.dump(2));
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = fs::path(cfg.out_dir) / ("exp" + std::to_string(cfg.id));
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_json(cfg));

  try {
    run_experiment_cell(cfg, dir);
  } catch (const std::exception& e) {
    // Leave a structured record in the failed cell; other cells' outputs
    // are untouched.
    json err;
    err["error"] = e.what();
    err["config"] = json::parse(config_to_json(cfg));
    write_text(dir / "error.json", err.dump(2));
    throw;
  }
}

}  // namespace chainimp
