#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "ipsw/covariates.hpp"

namespace ipsw {

enum class PopulationRole { kAnalyticSample, kTarget, kReference };

std::string_view to_string(PopulationRole role);
std::optional<PopulationRole> role_from_string(std::string_view name);

// Marginal parameters for one synthetic population. Binary prevalences are the
// generative quantities; race is a single three-level draw where white is the
// implicit remainder 1 - black - other. A nullopt prevalence marks the column
// as structurally unmeasured, permitted only for the four clinical covariates.
struct PopulationSpec {
  std::string name;
  PopulationRole role = PopulationRole::kTarget;
  Eigen::Index n_simulated = 0;
  double age_mean = 0.0;
  double age_sd = 0.0;
  std::array<std::optional<double>, kCovariateCount> prevalence{};  // kAge slot unused

  std::optional<double> prevalence_of(Covariate c) const { return prevalence[index_of(c)]; }

  bool measured(Covariate c) const {
    return c == Covariate::kAge || prevalence[index_of(c)].has_value();
  }

  void validate() const;  // throws SpecificationError naming the offending field
};

// Realized sample. One row per individual, columns in canonical covariate
// order; unmeasured columns are NaN-filled and flagged.
struct Cohort {
  std::string spec_name;
  Eigen::MatrixXd covariates;
  std::array<bool, kCovariateCount> measured{};

  Eigen::Index size() const { return covariates.rows(); }
  bool is_measured(Covariate c) const { return measured[index_of(c)]; }
  auto column(Covariate c) const { return covariates.col(index_of(c)); }
};

// (race_black, race_other) indicator pair for a category draw.
constexpr std::pair<double, double> race_indicators(int category_black_other_white) {
  return category_black_other_white == 0   ? std::pair<double, double>{1.0, 0.0}
         : category_black_other_white == 1 ? std::pair<double, double>{0.0, 1.0}
                                           : std::pair<double, double>{0.0, 0.0};
}

// The five built-in population parameter sets, keyed by name:
// trial (analytic sample), registry, pcornet_disease (reference),
// pcornet_overall, us_census.
const std::map<std::string, PopulationSpec, std::less<>>& builtin_specs();

// Draws spec.n_simulated individuals. Columns are generated in canonical order
// from a single mt19937_64 stream, so a (spec, seed) pair is reproducible
// bit-for-bit. Unmeasured columns consume no draws.
Cohort sample_population(const PopulationSpec& spec, std::uint64_t seed);

// Same draw into an existing cohort; keeps its allocation when the size
// matches. Every field is overwritten.
void sample_population_into(const PopulationSpec& spec, std::uint64_t seed, Cohort& out);

}  // namespace ipsw
