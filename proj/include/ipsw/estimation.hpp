#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipsw/outcome.hpp"
#include "ipsw/population.hpp"
#include "ipsw/selection.hpp"

namespace ipsw {

// Mean treatment effect over the analytic sample.
double sate(const PotentialOutcomes& outcomes);

// Weighted mean treatment effect: sum(w te) / sum(w). Sizes must match.
double pate_ipsw(const Eigen::Ref<const Eigen::VectorXd>& weights,
                 const Eigen::Ref<const Eigen::VectorXd>& treatment_effects);

inline constexpr std::string_view kSateModelName = "sate";

// Full study description. Defaults reproduce the built-in design: five
// populations, four scenarios, two weighting models, 1000 replications.
struct StudyConfig {
  std::vector<PopulationSpec> populations;
  std::vector<ScenarioSpec> scenarios;
  std::vector<WeightingSpec> weighting_models;
  int replications = 1000;
  std::uint64_t master_seed = 12345;
  std::vector<double> effect_scales{1.0};
  std::optional<int> workers;
  std::optional<std::string> age_anchor;          // population name; default: analytic sample
  std::optional<double> max_weight;               // optional weight cap, off by default
  std::optional<std::string> reference_weighting; // bias anchor model; default: first model
  bool collect_fit_diagnostics = false;

  const PopulationSpec& analytic_sample() const;
  const PopulationSpec& reference() const;
  const PopulationSpec& age_anchor_spec() const;
  const PopulationSpec* find_population(std::string_view name) const;
  const WeightingSpec* find_weighting(std::string_view name) const;
  std::string resolved_reference_weighting() const;

  void validate() const;  // throws ConfigError / SpecificationError
};

StudyConfig default_config();

inline constexpr std::array<double, 5> kDefaultSweepScales = {0.5, 1.0, 1.5, 2.0, 2.5};

// One PATE estimator: a weighting model applied toward a target population.
// The SATE pseudo-estimator uses kSateModelName with the analytic sample name.
struct EstimatorKey {
  std::string weighting_model;
  std::string target;

  friend bool operator==(const EstimatorKey&, const EstimatorKey&) = default;
};

struct SkipRecord {
  std::string weighting_model;
  std::string target;
  std::string reason;
};

// Deterministic expansion of the config into estimators: SATE first, then for
// each non-analytic population (config order) each weighting model (config
// order). Infeasible pairs (a model covariate unmeasured in the target) are
// skipped with a recorded reason.
struct StudyPlan {
  std::vector<EstimatorKey> estimators;
  std::vector<SkipRecord> skips;
  int reference_estimator = -1;  // index into estimators; bias anchor
};

StudyPlan make_plan(const StudyConfig& config);

struct FitDiagnostic {
  std::string weighting_model;
  std::string target;
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;
  double ess = 0.0;
  double min_weight = 0.0;
  double max_weight = 0.0;
  Eigen::VectorXd coefficients;
};

struct ReplicationResult {
  int rep_index = 0;
  std::vector<double> estimates;  // aligned with plan.estimators
  std::vector<double> biases;     // estimate - reference estimate, exact zero at the anchor
  std::vector<FitDiagnostic> fit_diagnostics;  // only when collect_fit_diagnostics
};

// Reusable cohort and design buffers. A worker passes the same instance to
// consecutive run_replication calls so the large per-target allocations are
// faulted in once, not per replication; results are unaffected because every
// buffer is fully overwritten.
struct ReplicationScratch {
  struct TargetBuffers {
    Cohort cohort;
    detail::StackedDesign design;
  };
  Cohort trial;
  std::map<std::string, TargetBuffers, std::less<>> targets;
};

// Runs one replication: samples fresh cohorts, generates outcomes, fits every
// planned estimator. `scale` multiplies the scenario's own effect_scale.
ReplicationResult run_replication(const StudyConfig& config, const ScenarioSpec& scenario,
                                  double scale, int rep_index);
ReplicationResult run_replication(const StudyConfig& config, const StudyPlan& plan,
                                  const ScenarioSpec& scenario, double scale, int rep_index,
                                  ReplicationScratch* scratch = nullptr);

struct SummaryRow {
  std::string scenario;
  double effect_scale = 1.0;
  std::string weighting_model;
  std::string target;
  double pate_mean = 0.0;
  double pate_sd = 0.0;
  double bias_mean = 0.0;
  double bias_sd = 0.0;
  int replications = 0;
};

struct FitDiagnosticRow {
  std::string scenario;
  double effect_scale = 1.0;
  int rep_index = 0;
  FitDiagnostic fit;
};

struct MonteCarloResult {
  StudyPlan plan;
  std::vector<SummaryRow> summary;               // cells x estimators, deterministic order
  std::vector<std::vector<double>> bias_draws;   // aligned with summary rows; [row][rep]
  std::vector<FitDiagnosticRow> fit_diagnostics; // only when collect_fit_diagnostics
  std::vector<std::string> warnings;
};

using ProgressFn = std::function<void(const std::string& cell, int done, int total)>;

// Runs replications for every (scenario, effect scale) cell. Results are
// stored per replication index and aggregated sequentially, so summaries are
// bit-identical for any worker count.
MonteCarloResult run_monte_carlo(const StudyConfig& config, const ProgressFn& progress = {});

// Same study repeated over a grid of effect scales (applied on top of each
// scenario's own effect_scale). Scales must be finite and >= 0.
MonteCarloResult effect_scale_sweep(const StudyConfig& config, const std::vector<double>& scales,
                                    const ProgressFn& progress = {});

}  // namespace ipsw
