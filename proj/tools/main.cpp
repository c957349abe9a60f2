// Command-line front end: dataset generation for the three simulation
// studies, multiple imputation over user CSVs, trace diagnostics, and the
// full experiment pipelines.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "chainimp/chains.hpp"
#include "chainimp/combine.hpp"
#include "chainimp/data.hpp"
#include "chainimp/diagnostics.hpp"
#include "chainimp/experiments.hpp"
#include "chainimp/jointgauss.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chainimp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_generate(int experiment, Eigen::Index n, Eigen::Index n_a, Eigen::Index n_b,
                 Eigen::Index n_c, std::uint64_t seed, const std::string& out) {
  RngStream rng(seed);
  RngStream data_rng = rng.fork("data");
  DataMatrix dm;
  switch (experiment) {
    case 1:
      dm = gen_exp1(n_a, n_b, n_c, data_rng);
      break;
    case 2:
      dm = gen_exp2(n, data_rng);
      break;
    case 3:
      dm = gen_exp3(n, data_rng);
      break;
    default:
      throw std::invalid_argument("generate: experiment must be 1, 2, or 3");
  }
  write_csv(dm, out);
  std::printf("wrote %ld x %ld matrix to %s\n", static_cast<long>(dm.n_rows()),
              static_cast<long>(dm.n_cols()), out.c_str());
  return 0;
}

int cmd_impute(const std::string& data_path, const std::string& spec_path,
               const std::string& method_name, int m, long iters, long burn, long thin,
               std::uint64_t seed, const std::string& out_dir) {
  const DataMatrix dm = load_csv(data_path);
  const ImputeMethod method =
      method_name == "joint" ? ImputeMethod::joint : ImputeMethod::iterative;

  std::vector<ConditionalModelSpec> specs;
  if (method == ImputeMethod::iterative) {
    specs = spec_path.empty() ? default_specs(dm)
                              : specs_from_json(read_file(spec_path), dm.col_names);
    for (const auto& s : specs) s.validate(dm.n_cols(), dm.col_kinds);
  }

  const long required = burn + static_cast<long>(m) * thin;
  long extra_burn = 0;
  if (iters > 0) {
    if (iters < required)
      throw std::invalid_argument("impute: --iters must be at least --burn + m * --thin");
    extra_burn = iters - required;
  }

  RngStream rng(seed);
  RngStream chain_rng = rng.fork("impute");
  const std::vector<Eigen::MatrixXd> imputed =
      multiple_impute(dm, method, specs, m, burn + extra_burn, thin, chain_rng);

  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    DataMatrix completed = dm;
    completed.values = imputed[i];
    completed.present.setConstant(true);
    char name[32];
    std::snprintf(name, sizeof(name), "imputed_%03zu.csv", i + 1);
    write_csv(completed, (fs::path(out_dir) / name).string());
  }

  json info;
  info["data"] = data_path;
  info["method"] = method_name;
  info["m"] = m;
  info["burn_in"] = burn + extra_burn;
  info["thin"] = thin;
  info["seed"] = seed;
  if (method == ImputeMethod::iterative)
    info["models"] = json::parse(specs_to_json(specs, dm.col_names))["models"];
  std::ofstream info_out(fs::path(out_dir) / "imputation.json", std::ios::binary);
  info_out << info.dump(2) << '\n';

  std::printf("wrote %d imputed datasets to %s\n", m, out_dir.c_str());
  return 0;
}

int cmd_diagnose(const std::vector<std::string>& trace_paths, const std::string& stat) {
  if (trace_paths.empty() || trace_paths.size() > 2)
    throw std::invalid_argument("diagnose: provide one or two trace files");
  const TraceSet a = TraceSet::read_csv(trace_paths[0]);

  json out;
  out["statistic"] = stat;
  TraceSet pooled_chains = a;
  if (trace_paths.size() == 2) {
    const TraceSet b = TraceSet::read_csv(trace_paths[1]);
    const std::vector<double> sa = a.pooled(stat);
    const std::vector<double> sb = b.pooled(stat);
    const KsResult ks = ks_two_sample(sa, sb);
    const TvEstimate tv = binned_tv(sa, sb, 50);
    out["ks"] = ks.statistic;
    out["tv"] = tv.value;
    // R-hat across the union of chains of both files.
    for (const auto& chain : b.values) {
      std::vector<std::vector<double>> reordered(pooled_chains.stat_names.size());
      for (std::size_t s = 0; s < pooled_chains.stat_names.size(); ++s)
        reordered[s] = chain[static_cast<std::size_t>(b.stat_index(pooled_chains.stat_names[s]))];
      pooled_chains.values.push_back(std::move(reordered));
    }
  }
  if (pooled_chains.n_chains() < 2)
    throw std::invalid_argument(
        "diagnose: R-hat needs at least 2 chains across the given trace files");
  const RhatResult r = rhat(pooled_chains, stat);
  if (r.degenerate) {
    out["rhat"] = "degenerate";
  } else {
    out["rhat"] = r.value;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_experiment(int id, const std::string& config_path, const std::string& out_dir,
                   int workers, std::uint64_t seed, bool seed_given) {
  ExperimentConfig cfg =
      config_path.empty() ? experiment_defaults(id) : config_from_json(read_file(config_path));
  if (!config_path.empty() && cfg.id != id && id != 0)
    throw std::invalid_argument("experiment: --id disagrees with config file");
  if (id != 0) cfg.id = id;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (workers > 0) cfg.workers = workers;
  if (seed_given) cfg.seed = seed;
  run_experiment(cfg);
  std::printf("experiment %d written to %s/exp%d\n", cfg.id, cfg.out_dir.c_str(), cfg.id);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chained-equation and joint Bayesian multiple imputation"};
  app.require_subcommand(1);

  // generate
  int g_experiment = 1;
  Eigen::Index g_n = 1000, g_na = 200, g_nb = 80, g_nc = 80;
  std::uint64_t g_seed = 1;
  std::string g_out = "data.csv";
  auto* generate = app.add_subcommand("generate", "simulate a study dataset");
  generate->add_option("--experiment", g_experiment, "study id (1, 2, or 3)")->required();
  generate->add_option("--n", g_n, "sample size (studies 2 and 3)");
  generate->add_option("--n-a", g_na, "complete rows (study 1)");
  generate->add_option("--n-b", g_nb, "rows missing variable 2 (study 1)");
  generate->add_option("--n-c", g_nc, "rows missing variable 1 (study 1)");
  generate->add_option("--seed", g_seed, "RNG seed");
  generate->add_option("--out", g_out, "output CSV path")->required();

  // impute
  std::string i_data, i_spec, i_method = "iterative", i_out = "imputed";
  int i_m = 5;
  long i_iters = 0, i_burn = 1000, i_thin = 10;
  std::uint64_t i_seed = 1;
  auto* impute = app.add_subcommand("impute", "multiply impute a CSV dataset");
  impute->add_option("--data", i_data, "input CSV with NA for missing cells")->required();
  impute->add_option("--spec", i_spec, "JSON model specs (default: all-main-effects)");
  impute->add_option("--method", i_method, "iterative | joint")
      ->check(CLI::IsMember({"iterative", "joint"}));
  impute->add_option("--m", i_m, "number of imputed datasets");
  impute->add_option("--iters", i_iters, "total sweeps (default burn + m * thin)");
  impute->add_option("--burn", i_burn, "burn-in sweeps");
  impute->add_option("--thin", i_thin, "sweeps between snapshots");
  impute->add_option("--seed", i_seed, "RNG seed");
  impute->add_option("--out", i_out, "output directory")->required();

  // diagnose
  std::vector<std::string> d_traces;
  std::string d_stat;
  auto* diagnose = app.add_subcommand("diagnose", "compare trace files");
  diagnose->add_option("--traces", d_traces, "one or two trace CSVs")
      ->required()
      ->expected(1, 2);
  diagnose->add_option("--stat", d_stat, "statistic name")->required();

  // experiment
  int e_id = 0, e_workers = 0;
  std::string e_config, e_out;
  std::uint64_t e_seed = 1;
  auto* experiment = app.add_subcommand("experiment", "run a full study pipeline");
  experiment->add_option("--id", e_id, "study id (1, 2, or 3)");
  experiment->add_option("--config", e_config, "JSON config overriding defaults");
  experiment->add_option("--out", e_out, "output directory");
  experiment->add_option("--workers", e_workers, "worker threads");
  auto* seed_opt = experiment->add_option("--seed", e_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return cmd_generate(g_experiment, g_n, g_na, g_nb, g_nc, g_seed, g_out);
    if (impute->parsed())
      return cmd_impute(i_data, i_spec, i_method, i_m, i_iters, i_burn, i_thin, i_seed,
                        i_out);
    if (diagnose->parsed()) return cmd_diagnose(d_traces, d_stat);
    if (experiment->parsed()) {
      if (e_id == 0 && e_config.empty())
        throw std::invalid_argument("experiment: provide --id or --config");
      return cmd_experiment(e_id, e_config, e_out, e_workers, e_seed,
                            seed_opt->count() > 0);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
