#include "ipsw/outcome.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ipsw/errors.hpp"

namespace ipsw {

void ScenarioSpec::validate() const {
  if (name.empty()) throw SpecificationError("scenario name must be nonempty");
  auto finite = [this](double v, const char* field) {
    if (!std::isfinite(v))
      throw SpecificationError("scenario '" + name + "': " + field + " must be finite");
  };
  finite(mu0, "mu0");
  finite(treatment_shift, "treatment_shift");
  finite(beta, "beta");
  finite(delta, "delta");
  finite(sigma_eps, "sigma_eps");
  finite(effect_scale, "effect_scale");
  if (!(sigma_eps > 0.0))
    throw SpecificationError("scenario '" + name + "': sigma_eps must be > 0");
  if (effect_scale < 0.0)
    throw SpecificationError("scenario '" + name + "': effect_scale must be >= 0");
}

const std::map<std::string, ScenarioSpec, std::less<>>& scenario_catalog() {
  static const std::map<std::string, ScenarioSpec, std::less<>> catalog = [] {
    std::map<std::string, ScenarioSpec, std::less<>> m;
    auto add = [&m](std::string name, CovariateSet modifiers) {
      ScenarioSpec s;
      s.name = name;
      s.modifiers = modifiers;
      m[std::move(name)] = std::move(s);
    };
    add("all_modifiers", CovariateSet::all());
    add("four_modifiers",
        {Covariate::kAge, Covariate::kFemale, Covariate::kHypertension, Covariate::kPad});
    add("one_modifier", {Covariate::kHypertension});
    add("no_modifiers", {});
    return m;
  }();
  return catalog;
}

double standardize_age(double age_years, const PopulationSpec& anchor) {
  if (!(anchor.age_sd > 0.0))
    throw SpecificationError("population '" + anchor.name + "': age_sd must be > 0");
  return (age_years - anchor.age_mean) / anchor.age_sd;
}

namespace {

void require_measured(const Cohort& cohort, const ScenarioSpec& scenario) {
  const bool delta_active = scenario.delta * scenario.effect_scale != 0.0;
  for (Covariate c : kAllCovariates) {
    const bool needed =
        scenario.beta != 0.0 || (delta_active && scenario.modifiers.contains(c));
    if (needed && !cohort.is_measured(c))
      throw SpecificationError("scenario '" + scenario.name + "': covariate '" +
                               std::string(to_string(c)) + "' is unmeasured in cohort '" +
                               cohort.spec_name + "'");
  }
}

}  // namespace

PotentialOutcomes generate_outcomes(const Cohort& cohort, const ScenarioSpec& scenario,
                                    const PopulationSpec& age_anchor, std::uint64_t seed) {
  scenario.validate();
  require_measured(cohort, scenario);
  const Eigen::Index n = cohort.size();
  const double k = scenario.effect_scale;

  Eigen::VectorXd age_std =
      (cohort.column(Covariate::kAge).array() - age_anchor.age_mean) / age_anchor.age_sd;

  // beta loads every column identically, delta only the modifier columns
  Eigen::VectorXd row_sum = age_std;
  Eigen::VectorXd modifier_sum =
      scenario.modifiers.contains(Covariate::kAge)
          ? age_std
          : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  for (Covariate c : kAllCovariates) {
    if (c == Covariate::kAge) continue;
    // require_measured only lets a column through unmeasured when every
    // coefficient on it is zero; skipping keeps NaN out of the zero products
    if (!cohort.is_measured(c)) continue;
    row_sum += cohort.column(c);
    if (scenario.modifiers.contains(c)) modifier_sum += cohort.column(c);
  }

  PotentialOutcomes out;
  out.te = (k * (scenario.treatment_shift + scenario.delta * modifier_sum.array())).matrix();

  Eigen::VectorXd eps(n);
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, scenario.sigma_eps);
    for (Eigen::Index i = 0; i < n; ++i) eps[i] = noise(rng);
  }
  out.y0 = (scenario.mu0 + scenario.beta * row_sum.array() + eps.array()).matrix();
  out.y1 = out.y0 + out.te;  // shared error draw: y1 - y0 is exactly te
  return out;
}

double expected_sate(const PopulationSpec& spec, const ScenarioSpec& scenario,
                     const PopulationSpec& age_anchor) {
  scenario.validate();
  double modifier_mean = 0.0;
  for (Covariate c : scenario.modifiers.items()) {
    if (c == Covariate::kAge) {
      modifier_mean += standardize_age(spec.age_mean, age_anchor);
      continue;
    }
    const auto p = spec.prevalence_of(c);
    if (!p)
      throw SpecificationError("population '" + spec.name + "': modifier '" +
                               std::string(to_string(c)) + "' is unmeasured");
    modifier_mean += *p;
  }
  return scenario.effect_scale * (scenario.treatment_shift + scenario.delta * modifier_mean);
}

}  // namespace ipsw
