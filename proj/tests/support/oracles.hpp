#pragma once

// Independent reference implementations used to cross-check the production
// solvers. Deliberately slow and simple: gradient ascent with backtracking on
// the raw likelihood, no code shared with the IRLS path.

#include <Eigen/Core>

#include <cmath>

namespace oracles {

inline double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double eta = beta[0];
    for (Eigen::Index j = 0; j < x.cols(); ++j) eta += x(i, j) * beta[j + 1];
    ll += y[i] * eta - (std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))));
  }
  return ll;
}

// Maximizes the logistic log-likelihood of y on [1, x] by gradient ascent
// with backtracking. Suitable only for well-conditioned covariates; intended
// for small synthetic designs.
inline Eigen::VectorXd logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    int max_iters = 50000, double grad_tol = 1e-9) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd grad(p + 1);
  double ll = logistic_loglik(x, y, beta);
  double step = 4.0 / static_cast<double>(n);

  for (int it = 0; it < max_iters; ++it) {
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      double eta = beta[0];
      for (Eigen::Index j = 0; j < p; ++j) eta += x(i, j) * beta[j + 1];
      const double resid = y[i] - 1.0 / (1.0 + std::exp(-eta));
      grad[0] += resid;
      for (Eigen::Index j = 0; j < p; ++j) grad[j + 1] += x(i, j) * resid;
    }
    if (grad.lpNorm<Eigen::Infinity>() < grad_tol) break;

    double trial_step = step * 2.0;
    while (trial_step > 1e-18) {
      const Eigen::VectorXd cand = beta + trial_step * grad;
      const double cand_ll = logistic_loglik(x, y, cand);
      if (cand_ll >= ll) {
        beta = cand;
        ll = cand_ll;
        step = trial_step;
        break;
      }
      trial_step *= 0.5;
    }
    if (trial_step <= 1e-18) break;
  }
  return beta;
}

}  // namespace oracles
