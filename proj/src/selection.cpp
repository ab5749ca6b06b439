#include "ipsw/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "ipsw/errors.hpp"

namespace ipsw {

void WeightingSpec::validate() const {
  if (name.empty()) throw SpecificationError("weighting model name must be nonempty");
  if (covariates.empty())
    throw SpecificationError("weighting model '" + name + "': covariate set must be nonempty");
}

namespace detail {

namespace {

constexpr Eigen::Index kBlockRows = 2048;

inline void kahan_add(double& sum, double& comp, double term) {
  const double y = term - comp;
  const double t = sum + y;
  comp = (t - sum) - y;
  sum = t;
}

// Per-fit scratch buffers so the blocked sweeps never allocate.
struct Workspace {
  Eigen::VectorXd eta;
  Eigen::ArrayXd p;
  Eigen::VectorXd r;
  Eigen::ArrayXd sw;
  Eigen::MatrixXd zw;
  Eigen::VectorXd block_score;
  Eigen::VectorXd score_comp;

  explicit Workspace(Eigen::Index m)
      : eta(kBlockRows),
        p(kBlockRows),
        r(kBlockRows),
        sw(kBlockRows),
        zw(kBlockRows, m),
        block_score(m),
        score_comp(m) {}
};

// One pass over the stacked design at `beta`: log-likelihood always, score
// and expected information on demand. Summation is blocked with Kahan
// compensation across blocks, so results are independent of everything except
// the fixed block order (convergence checks rely on that determinism).
double sweep(const DesignRef& z, Eigen::Index n_trial, const Eigen::VectorXd& beta,
             Eigen::VectorXd* score, Eigen::MatrixXd* curvature, Workspace& ws) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  double ll = 0.0, ll_comp = 0.0;
  if (score) {
    score->setZero(m);
    ws.score_comp.setZero(m);
  }
  if (curvature) curvature->setZero(m, m);

  for (Eigen::Index start = 0; start < n; start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, n - start);
    const auto zb = z.middleRows(start, len);
    auto eta = ws.eta.head(len);
    eta.noalias() = zb * beta;
    const auto ea = eta.array();

    // rows are ordered trial first, so y is implicit in the row index
    const Eigen::Index t = std::clamp<Eigen::Index>(n_trial - start, 0, len);
    double block_ll = t > 0 ? eta.head(t).sum() : 0.0;
    if (!score && !curvature) {
      // softplus(x) = max(x, 0) + log(1 + exp(-|x|)), overflow-free; exp and
      // log are the only transcendentals with packet kernels for double
      block_ll -= (ea.max(0.0) + (1.0 + (-ea.abs()).exp()).log()).sum();
      kahan_add(ll, ll_comp, block_ll);
      continue;
    }
    auto p = ws.p.head(len);
    p = 1.0 / (1.0 + (-ea).exp());
    // softplus(x) = -log(1 - p); the clamp only engages for |x| beyond any
    // value these fits reach, where the step is rejected anyway
    block_ll += (1.0 - p).max(std::numeric_limits<double>::denorm_min()).log().sum();
    kahan_add(ll, ll_comp, block_ll);

    if (score) {
      auto r = ws.r.head(len);
      r = (-p).matrix();
      if (t > 0) r.head(t).array() += 1.0;
      ws.block_score.noalias() = zb.transpose() * r;
      for (Eigen::Index j = 0; j < m; ++j)
        kahan_add((*score)[j], ws.score_comp[j], ws.block_score[j]);
    }
    if (curvature) {
      // lower triangle of zb' diag(w) zb, by column-pair dots; Eigen's packed
      // rank-update kernels are several times slower at these widths
      auto w = ws.sw.head(len);
      w = p * (1.0 - p);
      auto zw = ws.zw.topRows(len);
      zw.array() = zb.array().colwise() * w;
      for (Eigen::Index jc = 0; jc < m; ++jc)
        for (Eigen::Index ic = jc; ic < m; ++ic)
          (*curvature)(ic, jc) += zb.col(ic).dot(zw.col(jc));
    }
  }
  return ll;
}

double loglik_only(const DesignRef& z, Eigen::Index n_trial, const Eigen::VectorXd& beta,
                   Workspace& ws) {
  return sweep(z, n_trial, beta, nullptr, nullptr, ws);
}

// Moment-matched starting point: intercept at the marginal log-odds, slopes at
// the per-class mean separation of each standardized column. Deterministic in
// the design, cuts several Newton iterations on the large fits.
Eigen::VectorXd warm_start(const DesignRef& z, Eigen::Index n_trial, double marginal_p) {
  const Eigen::Index m = z.cols();
  const Eigen::Index n = z.rows();
  Eigen::VectorXd beta(m);
  beta[0] = std::log(marginal_p / (1.0 - marginal_p));
  if (m > 1) {
    const auto trial_block = z.block(0, 1, n_trial, m - 1);
    const auto target_block = z.block(n_trial, 1, n - n_trial, m - 1);
    beta.tail(m - 1) = (trial_block.colwise().mean() - target_block.colwise().mean()).transpose();
  }
  return beta;
}

// Score gradient mapped back to the original covariate scale:
// d/d(intercept) is shared, d/d(x_j) = sd_j * s_j + mean_j * s_0.
double original_scale_max_score(const Eigen::VectorXd& score_std,
                                const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::VectorXd>& sd) {
  double worst = std::abs(score_std[0]);
  for (Eigen::Index j = 1; j < score_std.size(); ++j) {
    const double orig = sd[j - 1] * score_std[j] + mean[j - 1] * score_std[0];
    worst = std::max(worst, std::abs(orig));
  }
  return worst;
}

// Below this score norm a full Newton step lands inside the convergence
// tolerance (quadratic contraction), so the curvature at the new iterate is
// never consumed and the sweep can skip it.
constexpr double kCurvatureSkipTol = 1e-4;

// Damped Newton ascent. On exit `beta`, `score` and `ll` describe the last
// iterate; returns the number of steps taken.
int run_newton(const DesignRef& z, Eigen::Index n_trial,
               const Eigen::Ref<const Eigen::VectorXd>& col_mean,
               const Eigen::Ref<const Eigen::VectorXd>& col_sd, const IrlsOptions& options,
               Workspace& ws, Eigen::VectorXd& beta, Eigen::VectorXd& score, double& ll,
               std::vector<double>* trace) {
  const Eigen::Index m = z.cols();
  Eigen::VectorXd score_try(m);
  Eigen::MatrixXd curv(m, m), curv_try(m, m);
  ll = sweep(z, n_trial, beta, &score, &curv, ws);
  if (trace) trace->push_back(ll);
  bool have_curv = true;

  int iter = 0;
  bool ll_plateau = false;
  bool stalled = false;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  while (iter < options.max_iterations) {
    const bool score_small = score.lpNorm<Eigen::Infinity>() < options.score_tol;
    const double orig_score = original_scale_max_score(score, col_mean, col_sd);
    const bool certified = orig_score < options.converged_score_tol;
    // Stated stop rules are score_small OR ll_plateau. At large n the
    // likelihood can plateau one step before the score equations hold on the
    // original scale, so a plateau without the certificate keeps polishing.
    if (score_small || (ll_plateau && certified) || stalled) break;
    if (!have_curv) {  // predicted stop did not happen; recover the curvature
      sweep(z, n_trial, beta, &score, &curv, ws);
      have_curv = true;
    }
    ++iter;

    Eigen::MatrixXd a = curv;
    a.diagonal().array() += options.ridge;
    ldlt.compute(Eigen::MatrixXd(a.template selfadjointView<Eigen::Lower>()));
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("selection model: curvature factorization failed");
    const Eigen::VectorXd delta = ldlt.solve(score);

    // optimistic full step: evaluate everything, fall back to halving if the
    // likelihood decreased. Near the optimum the true gain of a Newton step
    // drops below the LL evaluation roundoff (~eps * |LL|), so acceptance
    // tolerates decreases inside that noise band; rejecting them would halve
    // away steps the score still needs.
    const double noise_band = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(ll);
    const auto acceptable = [&](double candidate) { return candidate >= ll - noise_band; };
    const bool want_curv = score.lpNorm<Eigen::Infinity>() >= kCurvatureSkipTol;
    Eigen::VectorXd beta_try = beta + delta;
    double ll_try = sweep(z, n_trial, beta_try, &score_try, want_curv ? &curv_try : nullptr, ws);
    if (!acceptable(ll_try)) {
      double step = 1.0;
      int halvings = 0;
      while (halvings < options.max_step_halvings) {
        ++halvings;
        step *= 0.5;
        beta_try = beta + step * delta;
        ll_try = loglik_only(z, n_trial, beta_try, ws);
        if (acceptable(ll_try)) break;
      }
      if (!acceptable(ll_try)) {
        stalled = true;  // no ascent direction left at this scale
        continue;
      }
      ll_try = sweep(z, n_trial, beta_try, &score_try, want_curv ? &curv_try : nullptr, ws);
    }

    const double rel = std::abs(ll_try - ll) /
                       std::max(std::abs(ll_try), std::numeric_limits<double>::min());
    ll_plateau = rel < options.rel_ll_tol;
    beta.swap(beta_try);
    score.swap(score_try);
    if (want_curv) curv.swap(curv_try);
    have_curv = want_curv;
    ll = ll_try;
    if (trace) trace->push_back(ll);
  }
  return iter;
}

// Target-block prefix length for the pilot stage of large fits.
constexpr Eigen::Index kPilotRows = 65536;

}  // namespace

StackedDesign build_stacked_design(const Cohort& trial, const Cohort& target,
                                   const std::vector<Covariate>& columns) {
  StackedDesign d;
  build_stacked_design_into(trial, target, columns, d);
  return d;
}

void build_stacked_design_into(const Cohort& trial, const Cohort& target,
                               const std::vector<Covariate>& columns, StackedDesign& d) {
  if (trial.size() < 1 || target.size() < 1)
    throw SpecificationError("selection model requires nonempty trial and target cohorts");
  const Eigen::Index n1 = trial.size();
  const Eigen::Index n0 = target.size();
  const Eigen::Index n = n1 + n0;
  const Eigen::Index p = static_cast<Eigen::Index>(columns.size());

  d.columns = columns;
  d.n_trial = n1;
  d.mean.resize(p);
  d.sd.resize(p);
  d.z.resize(n, p + 1);
  d.z.col(0).setOnes();

  for (Eigen::Index j = 0; j < p; ++j) {
    const Covariate c = columns[static_cast<std::size_t>(j)];
    for (const Cohort* cohort : {&trial, &target})
      if (!cohort->is_measured(c))
        throw SpecificationError("covariate '" + std::string(to_string(c)) +
                                 "' is unmeasured in cohort '" + cohort->spec_name + "'");
    const auto xt = trial.column(c);
    const auto x0 = target.column(c);
    const double mean = (xt.sum() + x0.sum()) / static_cast<double>(n);
    const double ex2 = (xt.squaredNorm() + x0.squaredNorm()) / static_cast<double>(n);
    const double var = std::max(ex2 - mean * mean, 0.0);
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * (std::abs(mean) + 1.0)))
      throw SpecificationError("covariate '" + std::string(to_string(c)) +
                               "' is constant in the stacked data; model is not identified");
    d.mean[j] = mean;
    d.sd[j] = sd;
    auto col = d.z.col(j + 1);
    col.head(n1) = (xt.array() - mean) / sd;
    col.tail(n0) = (x0.array() - mean) / sd;
  }
}

SelectionFit fit_standardized(const DesignRef& z, Eigen::Index n_trial,
                              const Eigen::Ref<const Eigen::VectorXd>& col_mean,
                              const Eigen::Ref<const Eigen::VectorXd>& col_sd,
                              std::vector<Covariate> columns, const IrlsOptions& options) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  if (n_trial < 1 || n_trial >= n)
    throw SpecificationError("stacked design must contain trial and target rows");

  const double marginal_p = static_cast<double>(n_trial) / static_cast<double>(n);
  const Eigen::Index n_target = n - n_trial;
  Workspace ws(m);

  Eigen::VectorXd beta, score(m);
  double ll = 0.0;
  int pilot_iter = 0;
  if (n_target >= 4 * kPilotRows) {
    // pilot stage: solve on the trial rows plus a prefix of the target block.
    // Thinning the target at rate f shifts the optimal intercept by -log(f)
    // and leaves the slopes within sampling noise of the full-data optimum,
    // so the corrected pilot solution starts the full fit a couple of Newton
    // steps from convergence. Loose tolerances: the pilot only needs to get
    // inside that sampling noise.
    const DesignRef sub = z.topRows(n_trial + kPilotRows);
    const double sub_p =
        static_cast<double>(n_trial) / static_cast<double>(n_trial + kPilotRows);
    beta = warm_start(sub, n_trial, sub_p);
    IrlsOptions pilot = options;
    pilot.max_iterations = 25;
    pilot.score_tol = 1e-2;
    pilot.rel_ll_tol = 1e-9;
    pilot_iter = run_newton(sub, n_trial, col_mean, col_sd, pilot, ws, beta, score, ll, nullptr);
    beta[0] += std::log(static_cast<double>(kPilotRows) / static_cast<double>(n_target));
  } else {
    beta = warm_start(z, n_trial, marginal_p);
  }

  SelectionFit fit;
  fit.iterations =
      pilot_iter +
      run_newton(z, n_trial, col_mean, col_sd, options, ws, beta, score, ll, &fit.loglik_trace);
  fit.marginal_p = marginal_p;
  fit.max_abs_score = original_scale_max_score(score, col_mean, col_sd);
  fit.converged = fit.max_abs_score < options.converged_score_tol;
  fit.covariates = std::move(columns);

  // map coefficients back to the original covariate scale
  fit.coefficients.resize(m);
  double intercept = beta[0];
  for (Eigen::Index j = 1; j < m; ++j) {
    fit.coefficients[j] = beta[j] / col_sd[j - 1];
    intercept -= beta[j] * col_mean[j - 1] / col_sd[j - 1];
  }
  fit.coefficients[0] = intercept;

  Eigen::VectorXd eta_trial = z.topRows(n_trial) * beta;
  fit.trial_probabilities = (1.0 / (1.0 + (-eta_trial.array()).exp())).matrix();
  fit.weights = ipsw_weights(fit.trial_probabilities, marginal_p);
  return fit;
}

}  // namespace detail

SelectionFit fit_selection_model(const Cohort& trial, const Cohort& target,
                                 const WeightingSpec& spec, const IrlsOptions& options) {
  spec.validate();
  const auto design = detail::build_stacked_design(trial, target, spec.covariates.items());
  return detail::fit_standardized(design.z, design.n_trial, design.mean, design.sd,
                                  design.columns, options);
}

Eigen::VectorXd ipsw_weights(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                             double marginal_p, std::optional<double> max_weight) {
  if (!(marginal_p > 0.0) || !(marginal_p < 1.0))
    throw NumericalError("ipsw_weights: marginal probability must lie in (0, 1)");
  if (max_weight && !(*max_weight > 0.0))
    throw NumericalError("ipsw_weights: weight cap must be positive");
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p > 0.0) || p > 1.0 || !std::isfinite(p))
      throw NumericalError("ipsw_weights: probability outside (0, 1] at row " +
                           std::to_string(i));
  }
  Eigen::VectorXd w = marginal_p / probabilities.array();
  if (max_weight) w = w.cwiseMin(*max_weight);
  return w;
}

double effective_sample_size(const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() == 0) throw NumericalError("effective_sample_size: empty weight vector");
  if (!(weights.minCoeff() > 0.0))
    throw NumericalError("effective_sample_size: weights must be positive");
  const double s = weights.sum();
  return s * s / weights.squaredNorm();
}

}  // namespace ipsw
