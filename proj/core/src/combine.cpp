#include "chainimp/combine.hpp"

#include <numeric>

#include <json.hpp>

namespace chainimp {

using nlohmann::json;

std::string CombinedEstimate::to_json() const {
  json j;
  j["point"] = std::vector<double>(point.begin(), point.end());
  j["within"] = std::vector<double>(within_var.begin(), within_var.end());
  j["between"] = std::vector<double>(between_var.begin(), between_var.end());
  j["total"] = std::vector<double>(total_var.begin(), total_var.end());
  j["m"] = m;
  return j.dump(2);
}

CombinedEstimate rubin_combine(std::span<const Eigen::VectorXd> estimates,
                               std::span<const Eigen::VectorXd> variances) {
  const std::size_t m = estimates.size();
  if (m < 2)
    throw std::invalid_argument("rubin_combine: need m >= 2 (between-variance undefined)");
  if (variances.size() != m)
    throw std::invalid_argument("rubin_combine: estimate/variance count mismatch");
  const Eigen::Index k = estimates.front().size();
  for (const auto& e : estimates)
    if (e.size() != k) throw std::invalid_argument("rubin_combine: unequal estimate lengths");
  for (const auto& v : variances)
    if (v.size() != k) throw std::invalid_argument("rubin_combine: unequal variance lengths");

  CombinedEstimate out;
  out.m = static_cast<int>(m);
  out.point = Eigen::VectorXd::Zero(k);
  for (const auto& e : estimates) out.point += e;
  out.point /= static_cast<double>(m);

  out.within_var = Eigen::VectorXd::Zero(k);
  for (const auto& v : variances) out.within_var += v;
  out.within_var /= static_cast<double>(m);

  out.between_var = Eigen::VectorXd::Zero(k);
  for (const auto& e : estimates)
    out.between_var += (e - out.point).cwiseProduct(e - out.point);
  out.between_var /= static_cast<double>(m - 1);

  out.total_var =
      out.within_var + (1.0 + 1.0 / static_cast<double>(m)) * out.between_var;
  return out;
}

namespace {

std::vector<Eigen::Index> all_rows_of(const Eigen::MatrixXd& m) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(m.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

Eigen::VectorXd fit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        Family family) {
  return family == Family::linear ? linear_mle(X, y) : logistic_mle(X, y);
}

}  // namespace

std::vector<Eigen::VectorXd> per_dataset_mles(std::span<const Eigen::MatrixXd> imputed,
                                              const ConditionalModelSpec& model) {
  if (imputed.empty()) throw std::invalid_argument("per_dataset_mles: no datasets");
  std::vector<Eigen::VectorXd> out;
  out.reserve(imputed.size());
  for (const Eigen::MatrixXd& data : imputed) {
    const auto rows = all_rows_of(data);
    const auto [X, y] = build_design(data, model, rows);
    out.push_back(fit_mle(X, y, model.family));
  }
  return out;
}

Eigen::VectorXd stacked_mle(std::span<const Eigen::MatrixXd> imputed,
                            const ConditionalModelSpec& model) {
  if (imputed.empty()) throw std::invalid_argument("stacked_mle: no datasets");
  const Eigen::Index n = imputed.front().rows();
  const Eigen::Index p = imputed.front().cols();
  for (const auto& d : imputed)
    if (d.rows() != n || d.cols() != p)
      throw std::invalid_argument("stacked_mle: datasets must share shape");

  Eigen::MatrixXd stacked(n * static_cast<Eigen::Index>(imputed.size()), p);
  for (std::size_t i = 0; i < imputed.size(); ++i)
    stacked.middleRows(static_cast<Eigen::Index>(i) * n, n) = imputed[i];
  const auto rows = all_rows_of(stacked);
  const auto [X, y] = build_design(stacked, model, rows);
  return fit_mle(X, y, model.family);
}

Eigen::VectorXd mean_of_estimates(std::span<const Eigen::MatrixXd> imputed,
                                  const ConditionalModelSpec& model) {
  const std::vector<Eigen::VectorXd> mles = per_dataset_mles(imputed, model);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(mles.front().size());
  for (const auto& b : mles) mean += b;
  return mean / static_cast<double>(mles.size());
}

}  // namespace chainimp
