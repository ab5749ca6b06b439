#include "ipsw/balance.hpp"

#include <cmath>
#include <string>

#include "ipsw/errors.hpp"

namespace ipsw {

double smd_continuous(double mean_cmp, double sd_cmp, double mean_ref, double sd_ref) {
  if (!std::isfinite(mean_cmp) || !std::isfinite(mean_ref))
    throw NumericalError("smd_continuous: means must be finite");
  if (!(sd_cmp > 0.0) || !(sd_ref > 0.0) || !std::isfinite(sd_cmp) || !std::isfinite(sd_ref))
    throw NumericalError("smd_continuous: standard deviations must be positive");
  return (mean_cmp - mean_ref) / std::sqrt((sd_cmp * sd_cmp + sd_ref * sd_ref) / 2.0);
}

double smd_binary(double p_cmp, double p_ref) {
  for (double p : {p_cmp, p_ref})
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw NumericalError("smd_binary: prevalences must lie in [0, 1]");
  const double pooled = (p_cmp * (1.0 - p_cmp) + p_ref * (1.0 - p_ref)) / 2.0;
  if (!(pooled > 0.0)) throw NumericalError("smd_binary: pooled variance is zero");
  return (p_cmp - p_ref) / std::sqrt(pooled);
}

namespace {

std::optional<double> parameter_cell(const PopulationSpec& cmp, const PopulationSpec& ref,
                                     Covariate c) {
  if (c == Covariate::kAge)
    return smd_continuous(cmp.age_mean, cmp.age_sd, ref.age_mean, ref.age_sd);
  const auto pc = cmp.prevalence_of(c);
  const auto pr = ref.prevalence_of(c);
  if (!pc || !pr) return std::nullopt;
  return smd_binary(*pc, *pr);
}

}  // namespace

BalanceReport parameter_balance(const std::vector<PopulationSpec>& comparators,
                                const PopulationSpec& reference) {
  reference.validate();
  BalanceReport report;
  report.reference_name = reference.name;
  for (const auto& cmp : comparators) {
    cmp.validate();
    report.populations.push_back(cmp.name);
    auto& row = report.cells.emplace_back();
    for (Covariate c : kAllCovariates) row[index_of(c)] = parameter_cell(cmp, reference, c);
  }
  return report;
}

Eigen::VectorXd aggregate_smd(const BalanceReport& report, const CovariateSet& set) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(report.populations.size()));
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    double sum = 0.0;
    for (Covariate c : kAllCovariates) {
      if (!set.contains(c)) continue;
      const auto& cell = report.cells[static_cast<std::size_t>(k)][index_of(c)];
      if (cell) sum += *cell;  // unmeasured cells contribute zero
    }
    out[k] = sum;
  }
  return out;
}

void add_aggregate_row(BalanceReport& report, std::string label, const CovariateSet& set) {
  report.aggregates.emplace_back(std::move(label), aggregate_smd(report, set));
}

std::array<std::optional<double>, kCovariateCount> weighted_balance(
    const Cohort& trial, const Eigen::Ref<const Eigen::VectorXd>& weights,
    const PopulationSpec& target) {
  if (weights.size() != trial.size())
    throw NumericalError("weighted_balance: weight vector length does not match cohort size");
  if (weights.size() == 0) throw NumericalError("weighted_balance: empty cohort");
  if (!(weights.minCoeff() > 0.0))
    throw NumericalError("weighted_balance: weights must be positive");
  const double wsum = weights.sum();

  std::array<std::optional<double>, kCovariateCount> cells{};
  for (Covariate c : kAllCovariates) {
    if (!trial.is_measured(c) || !target.measured(c)) continue;
    const auto col = trial.column(c);
    const double wmean = weights.dot(col) / wsum;
    if (c == Covariate::kAge) {
      const double wvar = weights.dot((col.array() - wmean).square().matrix()) / wsum;
      if (!(wvar > 0.0))
        throw NumericalError("weighted_balance: weighted variance of age is zero");
      cells[index_of(c)] =
          smd_continuous(wmean, std::sqrt(wvar), target.age_mean, target.age_sd);
    } else {
      cells[index_of(c)] = smd_binary(wmean, *target.prevalence_of(c));
    }
  }
  return cells;
}

std::vector<LovePlotRow> love_plot_data(const BalanceReport& report) {
  std::vector<LovePlotRow> rows;
  rows.reserve(report.populations.size() * kCovariateCount);
  for (std::size_t k = 0; k < report.populations.size(); ++k)
    for (Covariate c : kAllCovariates)
      rows.push_back({report.populations[k], c, report.cells[k][index_of(c)]});
  return rows;
}

}  // namespace ipsw
