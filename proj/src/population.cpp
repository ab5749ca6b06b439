#include "ipsw/population.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ipsw/errors.hpp"

namespace ipsw {

namespace {

constexpr Eigen::Index kDrawBlock = 2048;

// Top 53 bits of the engine output, uniform on [0, 1).
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_bernoulli(Eigen::Ref<Eigen::VectorXd> col, double p, std::mt19937_64& rng) {
  Eigen::Array<double, kDrawBlock, 1> u;
  for (Eigen::Index start = 0; start < col.size(); start += kDrawBlock) {
    const Eigen::Index len = std::min(kDrawBlock, col.size() - start);
    for (Eigen::Index i = 0; i < len; ++i) u[i] = uniform_unit(rng);
    col.segment(start, len).array() = (u.head(len) < p).cast<double>();
  }
}

// Marsaglia polar transform in blocks: scalar uniform pairs, vectorized
// log/sqrt, scalar compaction of the accepted pairs (~79% acceptance).
void fill_normal(Eigen::Ref<Eigen::VectorXd> col, double mean, double sd, std::mt19937_64& rng) {
  Eigen::Array<double, kDrawBlock, 1> v1, v2, s, f;
  const Eigen::Index n = col.size();
  Eigen::Index have = 0;
  while (have < n) {
    for (Eigen::Index i = 0; i < kDrawBlock; ++i) v1[i] = 2.0 * uniform_unit(rng) - 1.0;
    for (Eigen::Index i = 0; i < kDrawBlock; ++i) v2[i] = 2.0 * uniform_unit(rng) - 1.0;
    s = v1 * v1 + v2 * v2;
    f = (-2.0 * s.log() / s).sqrt();  // finite only where 0 < s < 1
    for (Eigen::Index i = 0; i < kDrawBlock && have < n; ++i) {
      if (!(s[i] < 1.0) || !(s[i] > 0.0)) continue;
      col[have++] = mean + sd * v1[i] * f[i];
      if (have < n) col[have++] = mean + sd * v2[i] * f[i];
    }
  }
}

[[noreturn]] void spec_fail(const PopulationSpec& spec, const std::string& what) {
  throw SpecificationError("population '" + spec.name + "': " + what);
}

}  // namespace

std::string_view to_string(PopulationRole role) {
  switch (role) {
    case PopulationRole::kAnalyticSample: return "analytic_sample";
    case PopulationRole::kTarget: return "target";
    case PopulationRole::kReference: return "reference";
  }
  return "unknown";
}

std::optional<PopulationRole> role_from_string(std::string_view name) {
  if (name == "analytic_sample") return PopulationRole::kAnalyticSample;
  if (name == "target") return PopulationRole::kTarget;
  if (name == "reference") return PopulationRole::kReference;
  return std::nullopt;
}

void PopulationSpec::validate() const {
  if (name.empty()) throw SpecificationError("population name must be nonempty");
  if (n_simulated < 1) spec_fail(*this, "n_simulated must be >= 1");
  if (!std::isfinite(age_mean)) spec_fail(*this, "age_mean must be finite");
  if (!(age_sd > 0.0) || !std::isfinite(age_sd)) spec_fail(*this, "age_sd must be > 0");
  for (Covariate c : kAllCovariates) {
    if (c == Covariate::kAge) continue;
    const auto& p = prevalence[index_of(c)];
    if (!p.has_value()) {
      if (!is_clinical(c))
        spec_fail(*this, "demographic covariate '" + std::string(to_string(c)) +
                             "' cannot be unmeasured");
      continue;
    }
    if (!std::isfinite(*p) || *p < 0.0 || *p > 1.0)
      spec_fail(*this, "prevalence of '" + std::string(to_string(c)) + "' must lie in [0, 1]");
  }
  const double race = *prevalence[index_of(Covariate::kRaceBlack)] +
                      *prevalence[index_of(Covariate::kRaceOther)];
  if (race > 1.0) spec_fail(*this, "race_black + race_other must not exceed 1");
}

const std::map<std::string, PopulationSpec, std::less<>>& builtin_specs() {
  static const std::map<std::string, PopulationSpec, std::less<>> specs = [] {
    auto make = [](std::string name, PopulationRole role, Eigen::Index n, double age_mean,
                   double age_sd, std::array<std::optional<double>, 8> prev) {
      PopulationSpec s;
      s.name = std::move(name);
      s.role = role;
      s.n_simulated = n;
      s.age_mean = age_mean;
      s.age_sd = age_sd;
      for (int j = 0; j < 8; ++j) s.prevalence[j + 1] = prev[static_cast<std::size_t>(j)];
      return s;
    };
    std::map<std::string, PopulationSpec, std::less<>> m;
    // prevalence order: female, race_black, race_other, hispanic,
    //                   hypertension, heart_failure, cad, pad
    m["trial"] = make("trial", PopulationRole::kAnalyticSample, 5000, 61.8, 12.7,
                      {0.504, 0.225, 0.065, 0.090, 0.784, 0.105, 0.230, 0.092});
    m["registry"] = make("registry", PopulationRole::kTarget, 75000, 67.9, 12.6,
                         {0.455, 0.117, 0.030, 0.054, 0.872, 0.268, 0.579, 0.155});
    m["pcornet_disease"] = make("pcornet_disease", PopulationRole::kReference, 150000, 63.0, 13.7,
                                {0.521, 0.232, 0.111, 0.160, 0.770, 0.149, 0.249, 0.229});
    m["pcornet_overall"] = make("pcornet_overall", PopulationRole::kTarget, 300000, 41.4, 22.2,
                                {0.569, 0.167, 0.134, 0.150, 0.239, 0.030, 0.070, 0.050});
    m["us_census"] =
        make("us_census", PopulationRole::kTarget, 500000, 39.1, 23.5,
             {0.509, 0.135, 0.105, 0.187, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
    return m;
  }();
  return specs;
}

Cohort sample_population(const PopulationSpec& spec, std::uint64_t seed) {
  Cohort cohort;
  sample_population_into(spec, seed, cohort);
  return cohort;
}

void sample_population_into(const PopulationSpec& spec, std::uint64_t seed, Cohort& cohort) {
  spec.validate();
  const Eigen::Index n = spec.n_simulated;
  cohort.spec_name = spec.name;
  cohort.covariates.resize(n, kCovariateCount);
  std::mt19937_64 rng(seed);

  fill_normal(cohort.covariates.col(index_of(Covariate::kAge)), spec.age_mean, spec.age_sd, rng);
  cohort.measured[index_of(Covariate::kAge)] = true;

  fill_bernoulli(cohort.covariates.col(index_of(Covariate::kFemale)),
                 *spec.prevalence_of(Covariate::kFemale), rng);
  cohort.measured[index_of(Covariate::kFemale)] = true;

  {
    // one categorical draw per row: black, then other, white as remainder
    const double p_black = *spec.prevalence_of(Covariate::kRaceBlack);
    const double p_other = *spec.prevalence_of(Covariate::kRaceOther);
    auto black = cohort.covariates.col(index_of(Covariate::kRaceBlack));
    auto other = cohort.covariates.col(index_of(Covariate::kRaceOther));
    Eigen::Array<double, kDrawBlock, 1> u;
    for (Eigen::Index start = 0; start < n; start += kDrawBlock) {
      const Eigen::Index len = std::min(kDrawBlock, n - start);
      for (Eigen::Index i = 0; i < len; ++i) u[i] = uniform_unit(rng);
      black.segment(start, len).array() = (u.head(len) < p_black).cast<double>();
      other.segment(start, len).array() =
          (u.head(len) >= p_black && u.head(len) < p_black + p_other).cast<double>();
    }
    cohort.measured[index_of(Covariate::kRaceBlack)] = true;
    cohort.measured[index_of(Covariate::kRaceOther)] = true;
  }

  for (Covariate c : {Covariate::kHispanic, Covariate::kHypertension, Covariate::kHeartFailure,
                      Covariate::kCad, Covariate::kPad}) {
    auto col = cohort.covariates.col(index_of(c));
    if (const auto p = spec.prevalence_of(c)) {
      fill_bernoulli(col, *p, rng);
      cohort.measured[index_of(c)] = true;
    } else {
      col.setConstant(std::numeric_limits<double>::quiet_NaN());
      cohort.measured[index_of(c)] = false;
    }
  }
}

}  // namespace ipsw
