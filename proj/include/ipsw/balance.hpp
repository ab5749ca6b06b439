#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ipsw/covariates.hpp"
#include "ipsw/population.hpp"

namespace ipsw {

// Signed standardized mean difference, comparator minus reference, pooled-SD
// denominator. Throws NumericalError on domain violations (nonpositive SD,
// prevalence outside [0,1], zero pooled variance).
double smd_continuous(double mean_cmp, double sd_cmp, double mean_ref, double sd_ref);
double smd_binary(double p_cmp, double p_ref);

// Parameter-level balance table: one column of cells per comparator, one row
// per covariate, plus named aggregate rows. A nullopt cell means the covariate
// is unmeasured in the comparator (or the reference).
struct BalanceReport {
  std::string reference_name;
  std::vector<std::string> populations;
  // cells[k][j]: comparator k, covariate j in canonical order
  std::vector<std::array<std::optional<double>, kCovariateCount>> cells;
  // named aggregate rows; values per comparator in population order
  std::vector<std::pair<std::string, Eigen::VectorXd>> aggregates;
};

BalanceReport parameter_balance(const std::vector<PopulationSpec>& comparators,
                                const PopulationSpec& reference);

// Sum of signed SMDs over a covariate set, one entry per comparator.
// Unmeasured cells contribute zero.
Eigen::VectorXd aggregate_smd(const BalanceReport& report, const CovariateSet& set);

void add_aggregate_row(BalanceReport& report, std::string label, const CovariateSet& set);

// Weighted trial moments against target parameters; one optional cell per
// covariate (nullopt when unmeasured on either side). Weights must be positive
// and match the trial row count. The weighted SD uses the population
// (denominator n) convention so uniform weights reproduce plain moments.
std::array<std::optional<double>, kCovariateCount> weighted_balance(
    const Cohort& trial, const Eigen::Ref<const Eigen::VectorXd>& weights,
    const PopulationSpec& target);

// Long-format rows for plotting, sorted by population then canonical
// covariate order.
struct LovePlotRow {
  std::string population;
  Covariate covariate;
  std::optional<double> signed_smd;  // nullopt when unmeasured

  std::optional<double> abs_smd() const {
    return signed_smd ? std::optional<double>(std::abs(*signed_smd)) : std::nullopt;
  }
};

std::vector<LovePlotRow> love_plot_data(const BalanceReport& report);

}  // namespace ipsw
