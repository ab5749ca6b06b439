#include "ipsw/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

#include "ipsw/errors.hpp"
#include "ipsw/seeding.hpp"

namespace ipsw {

double sate(const PotentialOutcomes& outcomes) {
  if (outcomes.size() == 0) throw NumericalError("sate: empty outcome set");
  return outcomes.te.mean();
}

double pate_ipsw(const Eigen::Ref<const Eigen::VectorXd>& weights,
                 const Eigen::Ref<const Eigen::VectorXd>& treatment_effects) {
  if (weights.size() != treatment_effects.size())
    throw NumericalError("pate_ipsw: weights and treatment effects differ in length");
  if (weights.size() == 0) throw NumericalError("pate_ipsw: empty inputs");
  return weights.dot(treatment_effects) / weights.sum();
}

const PopulationSpec& StudyConfig::analytic_sample() const {
  for (const auto& p : populations)
    if (p.role == PopulationRole::kAnalyticSample) return p;
  throw ConfigError("config: no population with role analytic_sample");
}

const PopulationSpec& StudyConfig::reference() const {
  for (const auto& p : populations)
    if (p.role == PopulationRole::kReference) return p;
  throw ConfigError("config: no population with role reference");
}

const PopulationSpec* StudyConfig::find_population(std::string_view name) const {
  for (const auto& p : populations)
    if (p.name == name) return &p;
  return nullptr;
}

const WeightingSpec* StudyConfig::find_weighting(std::string_view name) const {
  for (const auto& w : weighting_models)
    if (w.name == name) return &w;
  return nullptr;
}

const PopulationSpec& StudyConfig::age_anchor_spec() const {
  if (!age_anchor) return analytic_sample();
  const auto* p = find_population(*age_anchor);
  if (!p) throw ConfigError("config: age_anchor '" + *age_anchor + "' is not a population");
  return *p;
}

std::string StudyConfig::resolved_reference_weighting() const {
  if (reference_weighting) return *reference_weighting;
  if (weighting_models.empty()) throw ConfigError("config: no weighting models");
  return weighting_models.front().name;
}

void StudyConfig::validate() const {
  if (populations.empty()) throw ConfigError("config: populations must be nonempty");
  if (scenarios.empty()) throw ConfigError("config: scenarios must be nonempty");
  if (weighting_models.empty()) throw ConfigError("config: weighting_models must be nonempty");

  std::set<std::string> names;
  int n_analytic = 0, n_reference = 0;
  for (const auto& p : populations) {
    p.validate();
    if (!names.insert(p.name).second)
      throw ConfigError("config: duplicate population name '" + p.name + "'");
    n_analytic += p.role == PopulationRole::kAnalyticSample ? 1 : 0;
    n_reference += p.role == PopulationRole::kReference ? 1 : 0;
  }
  if (n_analytic != 1)
    throw ConfigError("config: exactly one population must have role analytic_sample");
  if (n_reference != 1)
    throw ConfigError("config: exactly one population must have role reference");

  const auto& sample = analytic_sample();
  names.clear();
  for (const auto& s : scenarios) {
    s.validate();
    if (!names.insert(s.name).second)
      throw ConfigError("config: duplicate scenario name '" + s.name + "'");
    for (Covariate c : kAllCovariates) {
      const bool needed = s.beta != 0.0 || (s.delta != 0.0 && s.modifiers.contains(c));
      if (needed && !sample.measured(c))
        throw ConfigError("config: scenario '" + s.name + "' needs covariate '" +
                          std::string(to_string(c)) + "', unmeasured in the analytic sample");
    }
  }

  names.clear();
  for (const auto& w : weighting_models) {
    w.validate();
    if (!names.insert(w.name).second)
      throw ConfigError("config: duplicate weighting model name '" + w.name + "'");
    for (Covariate c : w.covariates.items())
      if (!sample.measured(c))
        throw ConfigError("config: weighting model '" + w.name + "' uses covariate '" +
                          std::string(to_string(c)) + "', unmeasured in the analytic sample");
  }

  if (replications < 1) throw ConfigError("config: replications must be >= 1");
  if (effect_scales.empty()) throw ConfigError("config: effect_scales must be nonempty");
  for (double s : effect_scales)
    if (!std::isfinite(s) || s < 0.0)
      throw ConfigError("config: effect scales must be finite and >= 0");
  if (workers && *workers < 1) throw ConfigError("config: workers must be >= 1");
  if (max_weight && (!std::isfinite(*max_weight) || !(*max_weight > 0.0)))
    throw ConfigError("config: max_weight must be positive");
  if (age_anchor && !find_population(*age_anchor))
    throw ConfigError("config: age_anchor '" + *age_anchor + "' is not a population");

  const std::string ref_model = resolved_reference_weighting();
  const auto* model = find_weighting(ref_model);
  if (!model)
    throw ConfigError("config: reference_weighting '" + ref_model + "' is not a weighting model");
  for (Covariate c : model->covariates.items())
    if (!reference().measured(c))
      throw ConfigError("config: reference_weighting '" + ref_model + "' uses covariate '" +
                        std::string(to_string(c)) + "', unmeasured in the reference population");
}

StudyConfig default_config() {
  StudyConfig config;
  const auto& pops = builtin_specs();
  for (const char* name : {"trial", "registry", "pcornet_disease", "pcornet_overall", "us_census"})
    config.populations.push_back(pops.at(name));
  const auto& scen = scenario_catalog();
  for (const char* name : {"all_modifiers", "four_modifiers", "one_modifier", "no_modifiers"})
    config.scenarios.push_back(scen.at(name));
  config.weighting_models.push_back({"dem_clin", CovariateSet::all()});
  config.weighting_models.push_back({"dem_only", CovariateSet::demographic()});
  return config;
}

StudyPlan make_plan(const StudyConfig& config) {
  config.validate();
  StudyPlan plan;
  plan.estimators.push_back({std::string(kSateModelName), config.analytic_sample().name});

  const std::string ref_model = config.resolved_reference_weighting();
  const std::string ref_pop = config.reference().name;
  for (const auto& pop : config.populations) {
    if (pop.role == PopulationRole::kAnalyticSample) continue;
    for (const auto& w : config.weighting_models) {
      std::string missing;
      for (Covariate c : w.covariates.items())
        if (!pop.measured(c)) {
          missing = to_string(c);
          break;
        }
      if (!missing.empty()) {
        plan.skips.push_back({w.name, pop.name,
                              "covariate '" + missing + "' is unmeasured in this population"});
        continue;
      }
      if (pop.name == ref_pop && w.name == ref_model)
        plan.reference_estimator = static_cast<int>(plan.estimators.size());
      plan.estimators.push_back({w.name, pop.name});
    }
  }
  if (plan.reference_estimator < 0)
    throw ConfigError("config: the reference estimator is infeasible");
  return plan;
}

namespace {

bool is_canonical_prefix(const std::vector<Covariate>& subset,
                         const std::vector<Covariate>& columns) {
  if (subset.size() > columns.size()) return false;
  return std::equal(subset.begin(), subset.end(), columns.begin());
}

FitDiagnostic make_diagnostic(const EstimatorKey& key, const SelectionFit& fit,
                              const Eigen::VectorXd& weights) {
  FitDiagnostic d;
  d.weighting_model = key.weighting_model;
  d.target = key.target;
  d.converged = fit.converged;
  d.iterations = fit.iterations;
  d.max_abs_score = fit.max_abs_score;
  d.ess = effective_sample_size(weights);
  d.min_weight = weights.minCoeff();
  d.max_weight = weights.maxCoeff();
  d.coefficients = fit.coefficients;
  return d;
}

}  // namespace

ReplicationResult run_replication(const StudyConfig& config, const StudyPlan& plan,
                                  const ScenarioSpec& scenario, double scale, int rep_index,
                                  ReplicationScratch* scratch) {
  if (rep_index < 0) throw ConfigError("replication index must be >= 0");
  const std::uint64_t child = child_seed(config.master_seed, scenario.name, scale, rep_index);
  const auto& analytic = config.analytic_sample();
  const auto& anchor = config.age_anchor_spec();

  ReplicationScratch local;
  ReplicationScratch& bufs = scratch ? *scratch : local;

  const Cohort& trial = bufs.trial;
  sample_population_into(analytic, population_seed(child, analytic.name), bufs.trial);
  ScenarioSpec scaled = scenario;
  scaled.effect_scale = scenario.effect_scale * scale;
  const PotentialOutcomes outcomes = generate_outcomes(trial, scaled, anchor, outcome_seed(child));

  ReplicationResult result;
  result.rep_index = rep_index;
  result.estimates.resize(plan.estimators.size(), 0.0);
  result.estimates[0] = sate(outcomes);

  const IrlsOptions irls_options;
  std::size_t i = 1;
  while (i < plan.estimators.size()) {
    const std::string& target_name = plan.estimators[i].target;
    std::size_t end = i;
    CovariateSet needed;
    while (end < plan.estimators.size() && plan.estimators[end].target == target_name) {
      const auto* w = config.find_weighting(plan.estimators[end].weighting_model);
      for (Covariate c : w->covariates.items()) needed.insert(c);
      ++end;
    }

    // one stacked standardized design per target, shared by every weighting
    // model through column views
    auto& tb = bufs.targets[target_name];
    const auto* target_spec = config.find_population(target_name);
    sample_population_into(*target_spec, population_seed(child, target_name), tb.cohort);
    detail::build_stacked_design_into(trial, tb.cohort, needed.items(), tb.design);
    const detail::StackedDesign& design = tb.design;

    for (std::size_t e = i; e < end; ++e) {
      const auto* w = config.find_weighting(plan.estimators[e].weighting_model);
      auto cols = w->covariates.items();
      SelectionFit fit;
      if (is_canonical_prefix(cols, design.columns)) {
        const Eigen::Index k = static_cast<Eigen::Index>(cols.size());
        fit = detail::fit_standardized(design.z.leftCols(k + 1), design.n_trial,
                                       design.mean.head(k), design.sd.head(k), std::move(cols),
                                       irls_options);
      } else {
        Eigen::MatrixXd zsub(design.z.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
        Eigen::VectorXd mean(static_cast<Eigen::Index>(cols.size()));
        Eigen::VectorXd sd(static_cast<Eigen::Index>(cols.size()));
        zsub.col(0) = design.z.col(0);
        for (std::size_t j = 0; j < cols.size(); ++j) {
          const auto it = std::find(design.columns.begin(), design.columns.end(), cols[j]);
          const Eigen::Index src = 1 + (it - design.columns.begin());
          zsub.col(static_cast<Eigen::Index>(j) + 1) = design.z.col(src);
          mean[static_cast<Eigen::Index>(j)] = design.mean[src - 1];
          sd[static_cast<Eigen::Index>(j)] = design.sd[src - 1];
        }
        fit = detail::fit_standardized(zsub, design.n_trial, mean, sd, std::move(cols),
                                       irls_options);
      }
      const Eigen::VectorXd weights =
          config.max_weight
              ? ipsw_weights(fit.trial_probabilities, fit.marginal_p, config.max_weight)
              : fit.weights;
      result.estimates[e] = pate_ipsw(weights, outcomes.te);
      if (config.collect_fit_diagnostics)
        result.fit_diagnostics.push_back(make_diagnostic(plan.estimators[e], fit, weights));
    }
    i = end;
  }

  // within-replication differences: the anchor's own bias is exactly zero
  const double anchor_estimate = result.estimates[static_cast<std::size_t>(plan.reference_estimator)];
  result.biases.resize(result.estimates.size());
  for (std::size_t e = 0; e < result.estimates.size(); ++e)
    result.biases[e] = result.estimates[e] - anchor_estimate;
  return result;
}

ReplicationResult run_replication(const StudyConfig& config, const ScenarioSpec& scenario,
                                  double scale, int rep_index) {
  return run_replication(config, make_plan(config), scenario, scale, rep_index);
}

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sd_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

MonteCarloResult run_monte_carlo(const StudyConfig& config, const ProgressFn& progress) {
  config.validate();
  MonteCarloResult out;
  out.plan = make_plan(config);
  const int reps = config.replications;
  if (reps == 1)
    out.warnings.push_back("single replication: standard deviations are reported as 0");

  int workers = config.workers.value_or(static_cast<int>(std::thread::hardware_concurrency()));
  workers = std::clamp(workers, 1, std::max(1, reps));

  for (const auto& scenario : config.scenarios) {
    for (const double scale : config.effect_scales) {
      const std::string cell = scenario.name + " x" + std::to_string(scale);
      std::vector<ReplicationResult> results(static_cast<std::size_t>(reps));
      std::atomic<int> next{0};
      std::atomic<int> done{0};
      std::atomic<bool> failed{false};
      std::exception_ptr error;
      std::mutex error_mutex;

      auto body = [&] {
        ReplicationScratch scratch;
        while (!failed.load(std::memory_order_relaxed)) {
          const int r = next.fetch_add(1, std::memory_order_relaxed);
          if (r >= reps) break;
          try {
            results[static_cast<std::size_t>(r)] =
                run_replication(config, out.plan, scenario, scale, r, &scratch);
          } catch (...) {
            std::scoped_lock lock(error_mutex);
            if (!error) error = std::current_exception();
            failed.store(true, std::memory_order_relaxed);
            break;
          }
          const int d = done.fetch_add(1, std::memory_order_relaxed) + 1;
          if (progress) {
            std::scoped_lock lock(error_mutex);
            progress(cell, d, reps);
          }
        }
      };

      if (workers == 1) {
        body();
      } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(body);
        for (auto& t : pool) t.join();
      }
      if (error) std::rethrow_exception(error);

      // aggregate sequentially in replication order: summaries are identical
      // for every worker count
      std::vector<double> est(static_cast<std::size_t>(reps));
      std::vector<double> bias(static_cast<std::size_t>(reps));
      for (std::size_t e = 0; e < out.plan.estimators.size(); ++e) {
        for (int r = 0; r < reps; ++r) {
          est[static_cast<std::size_t>(r)] = results[static_cast<std::size_t>(r)].estimates[e];
          bias[static_cast<std::size_t>(r)] = results[static_cast<std::size_t>(r)].biases[e];
        }
        SummaryRow row;
        row.scenario = scenario.name;
        row.effect_scale = scale;
        row.weighting_model = out.plan.estimators[e].weighting_model;
        row.target = out.plan.estimators[e].target;
        row.pate_mean = mean_of(est);
        row.pate_sd = sd_of(est, row.pate_mean);
        row.bias_mean = mean_of(bias);
        row.bias_sd = sd_of(bias, row.bias_mean);
        row.replications = reps;
        out.summary.push_back(std::move(row));
        out.bias_draws.push_back(bias);
      }
      if (config.collect_fit_diagnostics) {
        for (int r = 0; r < reps; ++r)
          for (const auto& d : results[static_cast<std::size_t>(r)].fit_diagnostics)
            out.fit_diagnostics.push_back({scenario.name, scale, r, d});
      }
    }
  }
  return out;
}

MonteCarloResult effect_scale_sweep(const StudyConfig& config, const std::vector<double>& scales,
                                    const ProgressFn& progress) {
  if (scales.empty()) throw ConfigError("effect scale sweep: scales must be nonempty");
  for (double s : scales)
    if (!std::isfinite(s) || s < 0.0)
      throw ConfigError("effect scale sweep: scales must be finite and >= 0");
  StudyConfig swept = config;
  swept.effect_scales = scales;
  return run_monte_carlo(swept, progress);
}

}  // namespace ipsw
