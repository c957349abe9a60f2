#include "chainimp/chains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

namespace chainimp {

using nlohmann::json;

std::vector<Eigen::Index> ChainState::missing_rows(Eigen::Index j) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n_rows(); ++i)
    if (!mask(i, j)) rows.push_back(i);
  return rows;
}

void ChainConfig::validate() const {
  if (n_iter <= 0) throw std::invalid_argument("ChainConfig: n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter)
    throw std::invalid_argument("ChainConfig: burn_in must be in [0, n_iter)");
  if (thin < 1) throw std::invalid_argument("ChainConfig: thin must be >= 1");
  if (n_chains < 1) throw std::invalid_argument("ChainConfig: n_chains must be >= 1");
}

std::size_t TraceSet::n_records() const {
  if (values.empty() || values.front().empty()) return 0;
  return values.front().front().size();
}

Eigen::Index TraceSet::stat_index(std::string_view name) const {
  for (std::size_t s = 0; s < stat_names.size(); ++s)
    if (stat_names[s] == name) return static_cast<Eigen::Index>(s);
  throw std::invalid_argument("TraceSet: no statistic named '" + std::string(name) + "'");
}

std::span<const double> TraceSet::trace(int chain, std::string_view name) const {
  if (chain < 0 || chain >= n_chains())
    throw std::invalid_argument("TraceSet: chain index out of range");
  const auto s = static_cast<std::size_t>(stat_index(name));
  return values[static_cast<std::size_t>(chain)][s];
}

std::vector<double> TraceSet::pooled(std::string_view name) const {
  const auto s = static_cast<std::size_t>(stat_index(name));
  std::vector<double> out;
  for (const auto& chain : values)
    out.insert(out.end(), chain[s].begin(), chain[s].end());
  return out;
}

void TraceSet::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("TraceSet: cannot open '" + path + "' for writing");
  out << "chain,iter,statistic,value\n";
  char buf[64];
  for (int c = 0; c < n_chains(); ++c) {
    for (std::size_t s = 0; s < stat_names.size(); ++s) {
      const auto& v = values[static_cast<std::size_t>(c)][s];
      for (std::size_t r = 0; r < v.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", v[r]);
        out << c << ',' << r << ',' << stat_names[s] << ',' << buf << '\n';
      }
    }
  }
  out.flush();
  if (!out) throw IoError("TraceSet: write failed for '" + path + "'");
}

TraceSet TraceSet::read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("TraceSet: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("TraceSet: '" + path + "' is empty");

  TraceSet ts;
  std::map<std::string, std::size_t> stat_of;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() && in.eof()) break;
    std::size_t p1 = line.find(',');
    std::size_t p2 = p1 == std::string::npos ? p1 : line.find(',', p1 + 1);
    std::size_t p3 = p2 == std::string::npos ? p2 : line.find(',', p2 + 1);
    if (p3 == std::string::npos)
      throw ParseError("TraceSet: malformed row " + std::to_string(row) + " in '" + path + "'");
    const int chain = std::stoi(line.substr(0, p1));
    const std::string stat = line.substr(p2 + 1, p3 - p2 - 1);
    const double value = std::stod(line.substr(p3 + 1));

    auto it = stat_of.find(stat);
    if (it == stat_of.end()) {
      it = stat_of.emplace(stat, ts.stat_names.size()).first;
      ts.stat_names.push_back(stat);
    }
    const std::size_t s = it->second;
    if (chain >= ts.n_chains()) ts.values.resize(static_cast<std::size_t>(chain) + 1);
    for (auto& per_chain : ts.values) per_chain.resize(ts.stat_names.size());
    ts.values[static_cast<std::size_t>(chain)][s].push_back(value);
  }
  return ts;
}

Monitor Monitor::scalar(std::string name, std::function<double(const ChainState&)> fn) {
  Monitor m;
  m.names = {std::move(name)};
  m.eval = [fn = std::move(fn)](const ChainState& s) { return std::vector<double>{fn(s)}; };
  return m;
}

ChainState init_state(const DataMatrix& dm, RngStream& rng) {
  dm.validate();
  ChainState state;
  state.data = dm.values;
  state.mask = dm.present;
  state.col_names = dm.col_names;
  state.col_kinds = dm.col_kinds;
  state.draws.assign(static_cast<std::size_t>(dm.n_cols()), std::monostate{});

  for (Eigen::Index j = 0; j < dm.n_cols(); ++j) {
    std::vector<double> observed;
    for (Eigen::Index i = 0; i < dm.n_rows(); ++i)
      if (dm.present(i, j)) observed.push_back(dm.values(i, j));
    const bool column_has_missing = observed.size() != static_cast<std::size_t>(dm.n_rows());
    if (!column_has_missing) continue;
    if (observed.empty())
      throw EstimationError("init_state: column '" + dm.col_names[static_cast<std::size_t>(j)] +
                            "' has no observed values");
    for (Eigen::Index i = 0; i < dm.n_rows(); ++i) {
      if (!dm.present(i, j))
        state.data(i, j) = observed[rng.uniform_index(observed.size())];
    }
  }
  return state;
}

void iterative_sweep(ChainState& state, std::span<const ConditionalModelSpec> specs,
                     RngStream& rng) {
  const Eigen::Index n = state.n_rows();

  for (Eigen::Index j = 0; j < state.n_cols(); ++j) {
    bool has_missing = false;
    for (Eigen::Index i = 0; i < n && !has_missing; ++i) has_missing = !state.mask(i, j);
    if (!has_missing) continue;
    bool covered = false;
    for (const auto& s : specs) covered = covered || s.target == j;
    if (!covered)
      throw std::invalid_argument("iterative_sweep: column '" +
                                  state.col_names[static_cast<std::size_t>(j)] +
                                  "' has missing cells but no model spec");
  }

  for (const ConditionalModelSpec& spec : specs) {
    try {
      spec.validate(state.n_cols(), state.col_kinds);
      // Fitting sample: rows with the target observed; covariates carry the
      // current imputations. Self-imputed responses never enter a likelihood.
      std::vector<Eigen::Index> fit_rows;
      fit_rows.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i)
        if (state.mask(i, spec.target)) fit_rows.push_back(i);
      const auto [X, y] = build_design(state.data, spec, fit_rows);
      const std::vector<Eigen::Index> slots = state.missing_rows(spec.target);
      if (spec.family == Family::linear) {
        const LinearDraw draw = linear_posterior_draw(X, y, spec.prior, rng);
        if (!slots.empty()) {
          const Eigen::MatrixXd X_mis = build_design_rows(state.data, spec, slots);
          const Eigen::VectorXd imputed = linear_impute(X_mis, draw, rng);
          for (std::size_t s = 0; s < slots.size(); ++s)
            state.data(slots[s], spec.target) = imputed(static_cast<Eigen::Index>(s));
        }
        state.draws[static_cast<std::size_t>(spec.target)] = draw;
      } else {
        const LogisticDraw draw = logistic_posterior_draw(X, y, rng);
        if (!slots.empty()) {
          const Eigen::MatrixXd X_mis = build_design_rows(state.data, spec, slots);
          const Eigen::VectorXd imputed = logistic_impute(X_mis, draw, rng);
          for (std::size_t s = 0; s < slots.size(); ++s)
            state.data(slots[s], spec.target) = imputed(static_cast<Eigen::Index>(s));
        }
        state.draws[static_cast<std::size_t>(spec.target)] = draw;
      }
    } catch (const std::exception& e) {
      throw NumericError("iterative_sweep: variable '" +
                         state.col_names[static_cast<std::size_t>(spec.target)] +
                         "' at iteration " + std::to_string(state.iter) + ": " + e.what());
    }
  }
  ++state.iter;
}

TraceSet run_chain(ChainState& state, const SweepFn& sweep, const ChainConfig& cfg,
                   std::span<const Monitor> monitors, RngStream& rng,
                   const std::string& flush_path) {
  cfg.validate();
  TraceSet ts;
  for (const Monitor& m : monitors)
    ts.stat_names.insert(ts.stat_names.end(), m.names.begin(), m.names.end());
  ts.values.resize(1);
  ts.values[0].resize(ts.stat_names.size());

  for (long it = 0; it < cfg.n_iter; ++it) {
    try {
      sweep(state, rng);
    } catch (const std::exception& e) {
      if (!flush_path.empty()) ts.write_csv(flush_path);
      throw NumericError("run_chain: sweep failed at iteration " + std::to_string(it) +
                         ": " + e.what());
    }
    const long post = it - cfg.burn_in;
    if (post >= 0 && post % cfg.thin == 0) {
      std::size_t s = 0;
      for (const Monitor& m : monitors) {
        const std::vector<double> vals = m.eval(state);
        if (vals.size() != m.names.size())
          throw std::invalid_argument("run_chain: monitor emitted wrong arity");
        for (double v : vals) ts.values[0][s++].push_back(v);
      }
    }
  }
  return ts;
}

TraceSet run_parallel_chains(const DataMatrix& dm, const SweepFn& sweep,
                             const ChainConfig& cfg, std::span<const Monitor> monitors,
                             const RngStream& base) {
  cfg.validate();
  std::vector<TraceSet> parts(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));

  auto run_one = [&](int c) {
    try {
      RngStream rng = base.fork("chain").fork(static_cast<std::uint64_t>(c));
      ChainState state = init_state(dm, rng);
      ChainConfig single = cfg;
      single.n_chains = 1;
      parts[static_cast<std::size_t>(c)] = run_chain(state, sweep, single, monitors, rng);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(cfg.n_chains));
  for (int c = 0; c < cfg.n_chains; ++c) workers.emplace_back(run_one, c);
  for (auto& w : workers) w.join();

  for (int c = 0; c < cfg.n_chains; ++c) {
    if (errors[static_cast<std::size_t>(c)]) {
      try {
        std::rethrow_exception(errors[static_cast<std::size_t>(c)]);
      } catch (const std::exception& e) {
        throw NumericError("run_parallel_chains: chain " + std::to_string(c) + ": " +
                           e.what());
      }
    }
  }

  // Deterministic merge keyed by chain index.
  TraceSet ts;
  ts.stat_names = parts.front().stat_names;
  ts.values.reserve(parts.size());
  for (auto& p : parts) ts.values.push_back(std::move(p.values.front()));
  return ts;
}

// ---- checkpointing -----------------------------------------------------------

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index n = static_cast<Eigen::Index>(j.size());
  const Eigen::Index p = n > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < p; ++c)
      m(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const ChainState& state, const RngStream& rng,
                     const std::string& path) {
  json j;
  j["format"] = "chainimp-checkpoint-v1";
  j["iter"] = state.iter;
  j["col_names"] = state.col_names;
  json kinds = json::array();
  for (ColKind k : state.col_kinds)
    kinds.push_back(k == ColKind::binary ? "binary" : "continuous");
  j["col_kinds"] = std::move(kinds);
  j["data"] = matrix_to_json(state.data);
  json mask = json::array();
  for (Eigen::Index i = 0; i < state.mask.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < state.mask.cols(); ++c) row.push_back(state.mask(i, c));
    mask.push_back(std::move(row));
  }
  j["mask"] = std::move(mask);
  const RngStream::Saved s = rng.save();
  j["rng"] = {{"state", s.state}, {"increment", s.increment}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

std::pair<ChainState, RngStream> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("load_checkpoint: '" + path + "': " + e.what());
  }
  if (j.value("format", "") != "chainimp-checkpoint-v1")
    throw ParseError("load_checkpoint: '" + path + "' is not a chainimp checkpoint");

  ChainState state;
  state.iter = j.at("iter").get<long>();
  state.col_names = j.at("col_names").get<std::vector<std::string>>();
  for (const auto& k : j.at("col_kinds"))
    state.col_kinds.push_back(k.get<std::string>() == "binary" ? ColKind::binary
                                                               : ColKind::continuous);
  state.data = matrix_from_json(j.at("data"));
  const json& mask = j.at("mask");
  state.mask.resize(state.data.rows(), state.data.cols());
  for (Eigen::Index i = 0; i < state.mask.rows(); ++i)
    for (Eigen::Index c = 0; c < state.mask.cols(); ++c)
      state.mask(i, c) =
          mask.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<bool>();
  state.draws.assign(state.col_names.size(), std::monostate{});

  const RngStream::Saved s{j.at("rng").at("state").get<std::uint64_t>(),
                           j.at("rng").at("increment").get<std::uint64_t>()};
  return {std::move(state), RngStream::restore(s)};
}

}  // namespace chainimp
