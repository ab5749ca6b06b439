#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>

#include "ipsw/covariates.hpp"
#include "ipsw/population.hpp"

namespace ipsw {

// Linear potential-outcome model:
//   y0 = mu0 + beta' x + eps
//   y1 = y0 + te,   te = effect_scale * (treatment_shift + delta' x[modifiers])
// where x is standardized age plus the eight binary indicators, beta is a
// common coefficient on every column, delta loads only the modifier columns,
// and eps is a single shared N(0, sigma_eps^2) draw per individual.
struct ScenarioSpec {
  std::string name;
  CovariateSet modifiers;
  double mu0 = 3.1;
  double treatment_shift = 5.4;
  double beta = -0.50;
  double delta = 1.34;
  double sigma_eps = 7.0;
  double effect_scale = 1.0;

  void validate() const;  // throws SpecificationError
};

struct PotentialOutcomes {
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd te;  // y1 - y0, noise-free by construction

  Eigen::Index size() const { return te.size(); }
};

// The four built-in scenarios keyed by name: all_modifiers, four_modifiers,
// one_modifier, no_modifiers.
const std::map<std::string, ScenarioSpec, std::less<>>& scenario_catalog();

// (age - anchor.age_mean) / anchor.age_sd
double standardize_age(double age_years, const PopulationSpec& anchor);

// Generates shared-error potential outcomes for every row of the cohort.
// Every covariate entering the model with a nonzero coefficient must be
// measured, else SpecificationError naming the column.
PotentialOutcomes generate_outcomes(const Cohort& cohort, const ScenarioSpec& scenario,
                                    const PopulationSpec& age_anchor, std::uint64_t seed);

// Closed-form E[te] under the spec's marginals (age enters through the anchor
// standardization). Requires every binary modifier to be measured in spec.
double expected_sate(const PopulationSpec& spec, const ScenarioSpec& scenario,
                     const PopulationSpec& age_anchor);

}  // namespace ipsw
