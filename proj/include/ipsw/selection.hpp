#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "ipsw/covariates.hpp"
#include "ipsw/population.hpp"

namespace ipsw {

// A named covariate list for the trial-membership model. Covariates enter the
// design in canonical order.
struct WeightingSpec {
  std::string name;
  CovariateSet covariates;

  void validate() const;  // throws SpecificationError
};

struct IrlsOptions {
  int max_iterations = 100;
  double rel_ll_tol = 1e-10;       // |dLL| / |LL| stopping rule
  double score_tol = 1e-8;         // max |score| stopping rule, standardized scale
  double converged_score_tol = 1e-6;  // convergence certificate, original scale
  double ridge = 1e-8;             // added to the curvature diagonal before solving
  int max_step_halvings = 30;
};

// Result of one logistic trial-membership fit on stacked (trial, target) rows.
// Coefficients are reported on the original covariate scale, intercept first,
// then the spec covariates in canonical order.
struct SelectionFit {
  std::vector<Covariate> covariates;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd trial_probabilities;  // fitted p(trial | x) for trial rows
  Eigen::VectorXd weights;              // marginal_p / trial_probabilities
  double marginal_p = 0.0;              // realized trial share of stacked rows
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;           // score at the solution, original scale
  std::vector<double> loglik_trace;     // per accepted iterate, non-decreasing
};

// Fits p(row is trial | covariates) by IRLS with internal standardization,
// step-halving and a ridge-stabilized Newton solve, then inverts fitted
// probabilities into IPSW weights. Throws SpecificationError for unmeasured or
// constant covariates and NumericalError for solver breakdowns.
SelectionFit fit_selection_model(const Cohort& trial, const Cohort& target,
                                 const WeightingSpec& spec, const IrlsOptions& options = {});

// w = marginal_p / p, optionally capped. Probabilities must lie in (0, 1].
Eigen::VectorXd ipsw_weights(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                             double marginal_p, std::optional<double> max_weight = std::nullopt);

// Kish effective sample size (sum w)^2 / sum w^2 for positive weights.
double effective_sample_size(const Eigen::Ref<const Eigen::VectorXd>& weights);

namespace detail {

// Stacked standardized design shared by every weighting spec on one
// (trial, target) pair: column 0 is the intercept, column 1+j is covariate
// columns[j] standardized by the stacked mean/sd. Trial rows come first.
struct StackedDesign {
  Eigen::MatrixXd z;
  std::vector<Covariate> columns;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::Index n_trial = 0;
};

// Builds the design over `columns` (canonical order expected by callers).
// Throws SpecificationError for unmeasured or constant columns.
StackedDesign build_stacked_design(const Cohort& trial, const Cohort& target,
                                   const std::vector<Covariate>& columns);

// Same build into an existing design; keeps its allocation when the shape
// matches. Every field is overwritten.
void build_stacked_design_into(const Cohort& trial, const Cohort& target,
                               const std::vector<Covariate>& columns, StackedDesign& out);

using DesignRef = Eigen::Ref<const Eigen::MatrixXd, Eigen::Unaligned, Eigen::OuterStride<>>;

// IRLS core on a prebuilt standardized design (possibly a column-prefix view).
// col_mean/col_sd describe the non-intercept columns.
SelectionFit fit_standardized(const DesignRef& z, Eigen::Index n_trial,
                              const Eigen::Ref<const Eigen::VectorXd>& col_mean,
                              const Eigen::Ref<const Eigen::VectorXd>& col_sd,
                              std::vector<Covariate> columns, const IrlsOptions& options);

}  // namespace detail

}  // namespace ipsw
