#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmte/power_basis.hpp"

namespace kmte {

inline double log1pexp(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

inline double logistic(double a) {
  if (a >= 0.0) {
    double e = std::exp(-a);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(a);
  return e / (1.0 + e);
}

struct LogitFit {
  PowerBasis basis;
  Eigen::VectorXd coef;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  double clip_lo = 1e-3;
  double clip_hi = 1.0 - 1e-3;

  double linear(const std::vector<double>& x) const {
    return basis.eval(x).dot(coef);
  }

  // fitted probability, clipped away from 0/1; clip_count is incremented
  // when the clip binds
  double predict(const std::vector<double>& x,
                 std::size_t* clip_count = nullptr) const {
    double p = logistic(linear(x));
    if (p < clip_lo) {
      if (clip_count) ++*clip_count;
      return clip_lo;
    }
    if (p > clip_hi) {
      if (clip_count) ++*clip_count;
      return clip_hi;
    }
    return p;
  }

  double predict_unclipped(const std::vector<double>& x) const {
    return logistic(linear(x));
  }
};

// Newton-Raphson MLE for a logit with power-basis regressors; the likelihood
// is evaluated in the t*a - log(1+e^a) form so nothing overflows
inline LogitFit fit_logit(const std::vector<std::vector<double>>& xs,
                          const std::vector<int>& labels, int degree,
                          int max_iter = 100, double tol = 1e-8) {
  if (xs.size() != labels.size() || xs.empty())
    throw std::invalid_argument("logit: sample size mismatch");
  bool any0 = false, any1 = false;
  for (int lab : labels) (lab == 1 ? any1 : any0) = true;
  if (!any0 || !any1)
    throw std::invalid_argument("logit: labels are all one class");
  LogitFit fit;
  fit.basis = make_power_basis(xs, degree);
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index L = static_cast<Eigen::Index>(fit.basis.L());
  if (n < L)
    throw std::invalid_argument("logit: more basis terms than observations");

  Eigen::MatrixXd R = fit.basis.design(xs);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = labels[static_cast<std::size_t>(i)];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd a(n), p(n), w(n);
  for (int it = 1; it <= max_iter; ++it) {
    a = R * beta;
    if (a.cwiseAbs().maxCoeff() > 1e4)
      throw std::runtime_error(
          "logit: fitted index diverged (separation); use a lower degree");
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = logistic(a(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    Eigen::VectorXd grad = R.transpose() * (t - p);
    Eigen::MatrixXd H = R.transpose() * w.asDiagonal() * R;
    double ridge = 1e-8 * H.trace() / static_cast<double>(L);
    Eigen::VectorXd step;
    bool solved = false;
    for (int attempt = 0; attempt < 4; ++attempt) {
      Eigen::MatrixXd Hr = H;
      Hr.diagonal().array() += ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(Hr);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(grad);
        if (step.allFinite()) {
          solved = true;
          break;
        }
      }
      ridge = (ridge > 0.0 ? ridge * 10.0 : 1e-8);
    }
    if (!solved)
      throw std::runtime_error("logit: Hessian factorization failed");
    beta += step;
    fit.iterations = it;
    if (step.cwiseAbs().maxCoeff() < tol) {
      fit.converged = true;
      break;
    }
  }
  // a non-converged fit whose index has saturated the logistic is a
  // separation drift, not a slow solve: the likelihood is unbounded
  if (!fit.converged && (R * beta).cwiseAbs().maxCoeff() > 30.0)
    throw std::runtime_error(
        "logit: fitted index diverged (separation); use a lower degree");
  fit.coef = beta;
  a = R * beta;
  fit.loglik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    fit.loglik += t(i) * a(i) - log1pexp(a(i));
  return fit;
}

}  // namespace kmte
