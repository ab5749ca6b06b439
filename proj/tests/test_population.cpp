#include <doctest.h>

#include <cmath>

#include "ipsw/errors.hpp"
#include "ipsw/population.hpp"

using namespace ipsw;

namespace {

double column_mean(const Cohort& c, Covariate cov) { return c.column(cov).mean(); }

double column_sd(const Cohort& c, Covariate cov) {
  const auto x = c.column(cov);
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST_CASE("builtin specs expose the five study populations") {
  const auto& specs = builtin_specs();
  REQUIRE(specs.size() == 5);

  const auto& trial = specs.at("trial");
  CHECK(trial.role == PopulationRole::kAnalyticSample);
  CHECK(trial.n_simulated == 5000);
  CHECK(trial.age_mean == doctest::Approx(61.8));
  CHECK(trial.age_sd == doctest::Approx(12.7));
  CHECK(*trial.prevalence_of(Covariate::kFemale) == doctest::Approx(0.504));
  CHECK(*trial.prevalence_of(Covariate::kRaceBlack) == doctest::Approx(0.225));
  CHECK(*trial.prevalence_of(Covariate::kRaceOther) == doctest::Approx(0.065));
  CHECK(*trial.prevalence_of(Covariate::kHispanic) == doctest::Approx(0.090));
  CHECK(*trial.prevalence_of(Covariate::kHypertension) == doctest::Approx(0.784));
  CHECK(*trial.prevalence_of(Covariate::kHeartFailure) == doctest::Approx(0.105));
  CHECK(*trial.prevalence_of(Covariate::kCad) == doctest::Approx(0.230));
  CHECK(*trial.prevalence_of(Covariate::kPad) == doctest::Approx(0.092));

  const auto& census = specs.at("us_census");
  CHECK(census.role == PopulationRole::kTarget);
  CHECK(census.n_simulated == 500000);
  CHECK(census.age_mean == doctest::Approx(39.1));
  CHECK(census.age_sd == doctest::Approx(23.5));
  CHECK(*census.prevalence_of(Covariate::kFemale) == doctest::Approx(0.509));
  CHECK_FALSE(census.prevalence_of(Covariate::kHypertension).has_value());
  CHECK_FALSE(census.prevalence_of(Covariate::kHeartFailure).has_value());
  CHECK_FALSE(census.prevalence_of(Covariate::kCad).has_value());
  CHECK_FALSE(census.prevalence_of(Covariate::kPad).has_value());
  CHECK(census.measured(Covariate::kAge));
  CHECK(census.measured(Covariate::kHispanic));
  CHECK_FALSE(census.measured(Covariate::kPad));

  CHECK(specs.at("registry").n_simulated == 75000);
  CHECK(specs.at("pcornet_disease").role == PopulationRole::kReference);
  CHECK(specs.at("pcornet_disease").n_simulated == 150000);
  CHECK(specs.at("pcornet_overall").n_simulated == 300000);
}

TEST_CASE("spec validation names the offending field") {
  PopulationSpec spec = builtin_specs().at("trial");

  SUBCASE("empty name") {
    spec.name.clear();
    CHECK_THROWS_AS(spec.validate(), SpecificationError);
  }
  SUBCASE("nonpositive size") {
    spec.n_simulated = 0;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("n_simulated"), SpecificationError);
  }
  SUBCASE("bad age sd") {
    spec.age_sd = 0.0;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("age_sd"), SpecificationError);
  }
  SUBCASE("demographics cannot be unmeasured") {
    spec.prevalence[index_of(Covariate::kFemale)].reset();
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("female"), SpecificationError);
  }
  SUBCASE("prevalence outside the unit interval") {
    spec.prevalence[index_of(Covariate::kCad)] = 1.2;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("cad"), SpecificationError);
  }
  SUBCASE("race shares cannot exceed one") {
    spec.prevalence[index_of(Covariate::kRaceBlack)] = 0.7;
    spec.prevalence[index_of(Covariate::kRaceOther)] = 0.5;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("race"), SpecificationError);
  }
}

TEST_CASE("sampling is a pure function of spec and seed") {
  const auto& spec = builtin_specs().at("trial");
  const Cohort a = sample_population(spec, 99);
  const Cohort b = sample_population(spec, 99);
  const Cohort c = sample_population(spec, 100);

  CHECK((a.covariates.array() == b.covariates.array()).all());  // bit-identical
  CHECK_FALSE((a.covariates.array() == c.covariates.array()).all());
  CHECK(a.spec_name == "trial");
  CHECK(a.size() == 5000);
}

TEST_CASE("sampling into a reused buffer matches a fresh draw") {
  const auto& registry = builtin_specs().at("registry");
  const auto& census = builtin_specs().at("us_census");

  Cohort buffer = sample_population(census, 7);  // stale content and flags
  buffer.covariates.col(0).setZero();
  sample_population_into(registry, 41, buffer);

  const Cohort fresh = sample_population(registry, 41);
  CHECK(buffer.spec_name == fresh.spec_name);
  CHECK((buffer.covariates.array() == fresh.covariates.array()).all());
  CHECK(buffer.measured == fresh.measured);
}

TEST_CASE("sampled moments match the spec parameters") {
  const auto& spec = builtin_specs().at("registry");
  const Cohort cohort = sample_population(spec, 2024);
  const double n = static_cast<double>(cohort.size());

  // five standard errors: loose enough to be stable, tight enough to catch a
  // swapped parameter or a broken transform
  const double age_mean_se = spec.age_sd / std::sqrt(n);
  const double age_sd_se = spec.age_sd / std::sqrt(2.0 * n);
  CHECK(std::abs(column_mean(cohort, Covariate::kAge) - spec.age_mean) < 5.0 * age_mean_se);
  CHECK(std::abs(column_sd(cohort, Covariate::kAge) - spec.age_sd) < 5.0 * age_sd_se);

  for (Covariate c : kAllCovariates) {
    if (c == Covariate::kAge) continue;
    const double p = *spec.prevalence_of(c);
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(column_mean(cohort, c) - p) < 5.0 * se);
    // binary columns hold exact indicators
    const auto x = cohort.column(c);
    CHECK((x.array() * (1.0 - x.array())).abs().maxCoeff() == 0.0);
  }

  // race categories are exclusive
  const auto black = cohort.column(Covariate::kRaceBlack);
  const auto other = cohort.column(Covariate::kRaceOther);
  CHECK((black.array() + other.array()).maxCoeff() <= 1.0);
}

TEST_CASE("unmeasured clinical columns are NaN and consume no draws") {
  const auto& census = builtin_specs().at("us_census");
  const Cohort cohort = sample_population(census, 5);

  for (Covariate c : {Covariate::kHypertension, Covariate::kHeartFailure, Covariate::kCad,
                      Covariate::kPad}) {
    CHECK_FALSE(cohort.is_measured(c));
    CHECK(cohort.column(c).array().isNaN().all());
  }
  for (Covariate c : {Covariate::kAge, Covariate::kFemale, Covariate::kRaceBlack,
                      Covariate::kRaceOther, Covariate::kHispanic}) {
    CHECK(cohort.is_measured(c));
    CHECK_FALSE(cohort.column(c).array().isNaN().any());
  }

  // the measured prefix of the stream is independent of the missing tail:
  // a spec with clinicals present draws identical demographics
  PopulationSpec with_clinicals = census;
  with_clinicals.n_simulated = 1000;
  for (Covariate c : {Covariate::kHypertension, Covariate::kHeartFailure, Covariate::kCad,
                      Covariate::kPad})
    with_clinicals.prevalence[index_of(c)] = 0.4;
  PopulationSpec truncated = census;
  truncated.n_simulated = 1000;
  const Cohort full = sample_population(with_clinicals, 123);
  const Cohort missing = sample_population(truncated, 123);
  for (Covariate c : {Covariate::kAge, Covariate::kFemale, Covariate::kRaceBlack,
                      Covariate::kRaceOther, Covariate::kHispanic})
    CHECK((full.column(c).array() == missing.column(c).array()).all());
}

TEST_CASE("degenerate prevalences produce constant indicator columns") {
  PopulationSpec spec = builtin_specs().at("trial");
  spec.n_simulated = 200;
  spec.prevalence[index_of(Covariate::kHypertension)] = 1.0;
  spec.prevalence[index_of(Covariate::kPad)] = 0.0;

  const Cohort cohort = sample_population(spec, 17);
  CHECK(cohort.column(Covariate::kHypertension).minCoeff() == 1.0);
  CHECK(cohort.column(Covariate::kPad).maxCoeff() == 0.0);
}

TEST_CASE("race indicator mapping is exhaustive") {
  constexpr auto black = race_indicators(0);
  constexpr auto other = race_indicators(1);
  constexpr auto white = race_indicators(2);
  static_assert(black.first == 1.0 && black.second == 0.0);
  static_assert(other.first == 0.0 && other.second == 1.0);
  static_assert(white.first == 0.0 && white.second == 0.0);
  CHECK(true);  // compile-time checks above
}
