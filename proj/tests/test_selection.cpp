#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "ipsw/balance.hpp"
#include "ipsw/errors.hpp"
#include "ipsw/selection.hpp"
#include "support/oracles.hpp"

using namespace ipsw;

namespace {

// cohort with the given values in the age slot and zeros elsewhere
Cohort cohort_from_x(const Eigen::VectorXd& x, const char* name) {
  Cohort c;
  c.spec_name = name;
  c.covariates.setZero(x.size(), kCovariateCount);
  c.measured.fill(true);
  c.covariates.col(index_of(Covariate::kAge)) = x;
  return c;
}

PopulationSpec shrunk(const char* name, Eigen::Index n) {
  PopulationSpec spec = builtin_specs().at(name);
  spec.n_simulated = n;
  return spec;
}

const WeightingSpec kAgeOnly{"age_only", {Covariate::kAge}};
const WeightingSpec kDemClin{"dem_clin", CovariateSet::all()};

}  // namespace

TEST_CASE("weighting spec validation") {
  CHECK_THROWS_AS((WeightingSpec{"", {Covariate::kAge}}.validate()), SpecificationError);
  CHECK_THROWS_AS((WeightingSpec{"empty", {}}.validate()), SpecificationError);
  CHECK_NOTHROW(kDemClin.validate());
}

TEST_CASE("a target identical to the trial gives the null model exactly") {
  const Cohort trial = sample_population(shrunk("trial", 2000), 3);
  Cohort target = trial;
  target.spec_name = "copy";

  const SelectionFit fit = fit_selection_model(trial, target, kDemClin);

  CHECK(fit.converged);
  CHECK(fit.marginal_p == 0.5);
  // the score vanishes at beta = 0, so the start is already the optimum
  CHECK(fit.iterations == 0);
  CHECK((fit.trial_probabilities.array() == 0.5).all());
  CHECK((fit.weights.array() == 1.0).all());
  CHECK(fit.coefficients.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("recovered coefficients match an independent optimizer and the truth") {
  // synthetic selection: eta = -2 + 0.8 x, x standard normal
  const Eigen::Index n = 6000;
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> xd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = xd(rng);
    const double p = 1.0 / (1.0 + std::exp(2.0 - 0.8 * x(i, 0)));
    y[i] = ud(rng) < p ? 1.0 : 0.0;
  }

  std::vector<double> x1, x0;
  for (Eigen::Index i = 0; i < n; ++i) (y[i] == 1.0 ? x1 : x0).push_back(x(i, 0));
  REQUIRE(x1.size() > 200);
  const Cohort trial = cohort_from_x(Eigen::Map<Eigen::VectorXd>(x1.data(),
                                                                 Eigen::Index(x1.size())),
                                     "selected");
  const Cohort target = cohort_from_x(Eigen::Map<Eigen::VectorXd>(x0.data(),
                                                                  Eigen::Index(x0.size())),
                                      "rest");

  const SelectionFit fit = fit_selection_model(trial, target, kAgeOnly);
  REQUIRE(fit.converged);
  REQUIRE(fit.coefficients.size() == 2);

  // same strictly concave objective, so both optimizers land on the same point
  const Eigen::VectorXd ref = oracles::logistic_fit(x, y);
  CHECK(fit.coefficients[0] == doctest::Approx(ref[0]).epsilon(1e-6));
  CHECK(fit.coefficients[1] == doctest::Approx(ref[1]).epsilon(1e-6));

  // and the MLE sits within three standard errors of the generating values
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = fit.coefficients[0] + fit.coefficients[1] * x(i, 0);
    const double p = 1.0 / (1.0 + std::exp(-eta));
    const double w = p * (1.0 - p);
    h(0, 0) += w;
    h(0, 1) += w * x(i, 0);
    h(1, 1) += w * x(i, 0) * x(i, 0);
  }
  h(1, 0) = h(0, 1);
  const Eigen::Matrix2d cov = h.inverse();
  CHECK(std::abs(fit.coefficients[0] - (-2.0)) < 3.0 * std::sqrt(cov(0, 0)));
  CHECK(std::abs(fit.coefficients[1] - 0.8) < 3.0 * std::sqrt(cov(1, 1)));
}

TEST_CASE("fits on simulated populations converge with a certified score") {
  const Cohort trial = sample_population(shrunk("trial", 5000), 10);

  SUBCASE("medium target") {
    const Cohort target = sample_population(shrunk("registry", 20000), 11);
    const SelectionFit fit = fit_selection_model(trial, target, kDemClin);
    CHECK(fit.converged);
    CHECK(fit.max_abs_score < 1e-6);
    CHECK(fit.iterations < 100);

    // likelihood ascent, modulo evaluation roundoff
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      const double band = 64.0 * std::numeric_limits<double>::epsilon() *
                          std::abs(fit.loglik_trace[i - 1]);
      CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - band);
    }
  }
  SUBCASE("large target engages the pilot stage") {
    const Cohort target = sample_population(shrunk("pcornet_overall", 280000), 12);
    const SelectionFit fit = fit_selection_model(trial, target, kDemClin);
    CHECK(fit.converged);
    CHECK(fit.max_abs_score < 1e-6);
    CHECK(fit.trial_probabilities.size() == trial.size());
    CHECK(fit.weights.minCoeff() > 0.0);
  }
}

TEST_CASE("shifting the age origin changes only the intercept") {
  const Cohort trial = sample_population(shrunk("trial", 4000), 21);
  const Cohort target = sample_population(shrunk("registry", 8000), 22);

  Cohort trial_shift = trial;
  Cohort target_shift = target;
  trial_shift.covariates.col(index_of(Covariate::kAge)).array() += 1000.0;
  target_shift.covariates.col(index_of(Covariate::kAge)).array() += 1000.0;

  const SelectionFit a = fit_selection_model(trial, target, kDemClin);
  const SelectionFit b = fit_selection_model(trial_shift, target_shift, kDemClin);

  CHECK((a.trial_probabilities - b.trial_probabilities).lpNorm<Eigen::Infinity>() < 1e-8);
  for (Eigen::Index j = 1; j < a.coefficients.size(); ++j)
    CHECK(a.coefficients[j] == doctest::Approx(b.coefficients[j]).epsilon(1e-6));
  CHECK(a.coefficients[0] != b.coefficients[0]);
}

TEST_CASE("reweighting the trial balances it toward the target") {
  const Cohort trial = sample_population(shrunk("trial", 5000), 31);
  const PopulationSpec disease = shrunk("pcornet_disease", 30000);
  const Cohort target = sample_population(disease, 32);

  const SelectionFit fit = fit_selection_model(trial, target, kDemClin);
  REQUIRE(fit.converged);

  const auto before = weighted_balance(trial, Eigen::VectorXd::Ones(trial.size()), disease);
  const auto after = weighted_balance(trial, fit.weights, disease);
  double worst_before = 0.0, worst_after = 0.0;
  for (Covariate c : kAllCovariates) {
    worst_before = std::max(worst_before, std::abs(*before[index_of(c)]));
    worst_after = std::max(worst_after, std::abs(*after[index_of(c)]));
  }
  CHECK(worst_before > 0.1);  // the raw trial is meaningfully imbalanced
  CHECK(worst_after < 0.1);
}

TEST_CASE("weight construction validates inputs and applies the cap") {
  Eigen::VectorXd p(4);
  p << 0.25, 0.5, 0.125, 1.0;

  const Eigen::VectorXd w = ipsw_weights(p, 0.25);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.5);
  CHECK(w[2] == 2.0);
  CHECK(w[3] == 0.25);

  const Eigen::VectorXd capped = ipsw_weights(p, 0.25, 1.5);
  CHECK(capped[2] == 1.5);
  CHECK(capped[0] == 1.0);

  Eigen::VectorXd bad = p;
  bad[1] = 0.0;
  CHECK_THROWS_AS(ipsw_weights(bad, 0.25), NumericalError);
  bad[1] = 1.5;
  CHECK_THROWS_AS(ipsw_weights(bad, 0.25), NumericalError);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ipsw_weights(bad, 0.25), NumericalError);
  CHECK_THROWS_AS(ipsw_weights(p, 0.0), NumericalError);
  CHECK_THROWS_AS(ipsw_weights(p, 1.0), NumericalError);
  CHECK_THROWS_AS(ipsw_weights(p, 0.25, 0.0), NumericalError);
}

TEST_CASE("effective sample size") {
  CHECK(effective_sample_size(Eigen::VectorXd::Ones(16)) == 16.0);

  Eigen::VectorXd w(3);
  w << 1.0, 1.0, 2.0;
  CHECK(effective_sample_size(w) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));

  Eigen::VectorXd dominant(3);
  dominant << 1e6, 1.0, 1.0;
  CHECK(effective_sample_size(dominant) == doctest::Approx(1.0).epsilon(1e-4));

  CHECK_THROWS_AS(effective_sample_size(Eigen::VectorXd()), NumericalError);
  Eigen::VectorXd nonpos(2);
  nonpos << 1.0, 0.0;
  CHECK_THROWS_AS(effective_sample_size(nonpos), NumericalError);
}

TEST_CASE("degenerate designs are rejected with a named covariate") {
  PopulationSpec no_hispanic = shrunk("trial", 1000);
  no_hispanic.prevalence[index_of(Covariate::kHispanic)] = 0.0;
  const Cohort trial = sample_population(no_hispanic, 41);
  const Cohort target = sample_population(no_hispanic, 42);

  CHECK_THROWS_WITH_AS(
      fit_selection_model(trial, target, WeightingSpec{"h", {Covariate::kHispanic}}),
      doctest::Contains("hispanic"), SpecificationError);

  const Cohort census = sample_population(shrunk("us_census", 1000), 43);
  CHECK_THROWS_WITH_AS(fit_selection_model(trial, census, kDemClin),
                       doctest::Contains("hypertension"), SpecificationError);
}
