#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmte/dataset.hpp"
#include "kmte/km_weights.hpp"
#include "kmte/parallel.hpp"
#include "kmte/power_basis.hpp"
#include "kmte/processes.hpp"
#include "kmte/series_logit.hpp"

namespace kmte {

// ---- empirical sub-distributions, 1/n normalized ------------------------
// step functions used by the correction terms; kept as sorted jump lists

struct HFunctions {
  std::size_t n = 0;
  std::vector<double> q_all[2];   // arm values, sorted
  std::vector<double> q_cens[2];  // censored arm values, sorted
  // uncensored (q, x) pairs per arm, sorted by q
  std::vector<std::pair<double, std::vector<double>>> q_unc[2];

  double h_t(int t, double w) const {
    auto& v = q_all[t];
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), w) -
                               v.begin()) /
           static_cast<double>(n);
  }
  double h_t0(int t, double w) const {
    auto& v = q_cens[t];
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), w) -
                               v.begin()) /
           static_cast<double>(n);
  }
  double h_t11(int t, double w, const std::vector<double>& xb) const {
    std::size_t c = 0;
    for (const auto& p : q_unc[t]) {
      if (p.first > w) break;
      if (leq_all(p.second, xb)) ++c;
    }
    return static_cast<double>(c) / static_cast<double>(n);
  }
};

inline HFunctions estimate_h_functions(const Dataset& d) {
  HFunctions h;
  h.n = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    int t = d.t[i];
    h.q_all[t].push_back(d.q[i]);
    if (!d.delta[i])
      h.q_cens[t].push_back(d.q[i]);
    else
      h.q_unc[t].emplace_back(d.q[i], d.x[i]);
  }
  for (int t = 0; t < 2; ++t) {
    std::sort(h.q_all[t].begin(), h.q_all[t].end());
    std::sort(h.q_cens[t].begin(), h.q_cens[t].end());
    std::sort(h.q_unc[t].begin(), h.q_unc[t].end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return h;
}

// ---- per-arm censoring-correction machinery ------------------------------
//
// The correction functions are normalized within the arm whose KM weights
// they describe: with m arm observations the product form below satisfies
// m * W_i = delta_i * gamma0(Q_i) exactly, which is what ties the weighted
// sums to the per-observation representation. Jumps at the arm maximum,
// where nobody is left at risk, are dropped and counted.

struct ArmStute {
  const OrderedSubsample* s = nullptr;
  std::size_t m = 0;
  std::vector<std::size_t> block_start;  // first ordered index per tie block
  std::vector<double> block_value;
  std::vector<std::size_t> block_of;  // tie-block index per ordered obs
  std::vector<std::size_t> ncens;     // censored count per block
  std::vector<double> gamma0;         // per obs, product over censored values < Q_i
  std::vector<double> g0_after;       // per block, product through the block
  std::vector<double> inv_tail;       // per block, 1/#{q > value}; 0 at the max
  std::size_t excluded_points = 0;

  std::size_t blocks() const { return block_start.size(); }
  std::size_t block_end(std::size_t b) const {
    return b + 1 < blocks() ? block_start[b + 1] : m;
  }
};

inline ArmStute make_arm_stute(const OrderedSubsample& s) {
  ArmStute a;
  a.s = &s;
  a.m = s.size();
  for (std::size_t i = 0; i < a.m; ++i) {
    if (i == 0 || s.q[i] != s.q[i - 1]) {
      a.block_start.push_back(i);
      a.block_value.push_back(s.q[i]);
      a.ncens.push_back(0);
    }
    a.block_of.push_back(a.blocks() - 1);
    if (!s.delta[i]) ++a.ncens.back();
  }
  const std::size_t nb = a.blocks();
  a.gamma0.resize(a.m);
  a.g0_after.resize(nb);
  a.inv_tail.resize(nb);
  double prod = 1.0;
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = a.block_start[b]; i < a.block_end(b); ++i)
      a.gamma0[i] = prod;
    const std::size_t tail = a.m - a.block_end(b);  // strictly above this value
    a.inv_tail[b] = tail > 0 ? 1.0 / static_cast<double>(tail) : 0.0;
    if (a.ncens[b] > 0) {
      if (tail > 0)
        prod *= static_cast<double>(tail + a.ncens[b]) /
                static_cast<double>(tail);
      else
        ++a.excluded_points;
    }
    a.g0_after[b] = prod;
  }
  return a;
}

inline double gamma0_at(const ArmStute& a, double ybar) {
  // first block with value >= ybar; product over the strictly earlier ones
  auto it = std::lower_bound(a.block_value.begin(), a.block_value.end(), ybar);
  if (it == a.block_value.begin()) return 1.0;
  return a.g0_after[static_cast<std::size_t>(it - a.block_value.begin()) - 1];
}

// xi(i) must give the integrand for uncensored ordered obs i (indicators and
// propensity division already applied); it is never called for censored obs
template <class Xi>
double gamma1_at(const ArmStute& a, Xi&& xi, double ybar) {
  const OrderedSubsample& s = *a.s;
  double above = 0.0;
  for (std::size_t i = 0; i < a.m; ++i)
    if (s.delta[i] && s.q[i] > ybar) above += xi(i) * a.gamma0[i];
  const std::size_t r = static_cast<std::size_t>(
      std::upper_bound(s.q.begin(), s.q.end(), ybar) - s.q.begin());
  if (r == a.m) return 0.0;  // nobody at risk beyond ybar
  return above / static_cast<double>(a.m - r);
}

template <class Xi>
double gamma2_at(const ArmStute& a, Xi&& xi, double ybar) {
  const OrderedSubsample& s = *a.s;
  const std::size_t nb = a.blocks();
  std::vector<double> bsum(nb, 0.0);
  for (std::size_t i = 0; i < a.m; ++i)
    if (s.delta[i]) bsum[a.block_of[i]] += xi(i) * a.gamma0[i];
  double acc = 0.0, run = 0.0;
  for (std::size_t b = nb; b-- > 0;) {
    // run = uncensored mass strictly above block b
    if (a.block_value[b] < ybar && a.ncens[b] > 0)
      acc += static_cast<double>(a.ncens[b]) * run * a.inv_tail[b] *
             a.inv_tail[b];
    run += bsum[b];
  }
  return acc;
}

// all per-observation eta values of one arm at one grid column:
// eta_i = xi_i*gamma0_i for uncensored obs, gamma1(Q_i) for censored obs,
// minus gamma2(Q_i) for everyone
template <class Xi>
void arm_eta(const ArmStute& a, Xi&& xi, std::vector<double>& eta) {
  const OrderedSubsample& s = *a.s;
  const std::size_t nb = a.blocks();
  std::vector<double> e(a.m, 0.0), bsum(nb, 0.0), sufa(nb, 0.0),
      cpref(nb, 0.0);
  for (std::size_t i = 0; i < a.m; ++i) {
    if (s.delta[i]) {
      e[i] = xi(i) * a.gamma0[i];
      bsum[a.block_of[i]] += e[i];
    }
  }
  double run = 0.0;
  for (std::size_t b = nb; b-- > 0;) {
    sufa[b] = run;  // uncensored mass strictly above block b
    run += bsum[b];
  }
  double acc = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    acc += static_cast<double>(a.ncens[b]) * sufa[b] * a.inv_tail[b] *
           a.inv_tail[b];
    cpref[b] = acc;
  }
  eta.assign(a.m, 0.0);
  for (std::size_t i = 0; i < a.m; ++i) {
    const std::size_t b = a.block_of[i];
    double v = s.delta[i] ? e[i] : sufa[b] * a.inv_tail[b];
    if (b > 0) v -= cpref[b - 1];
    eta[i] = v;
  }
}

// ---- series projections of KM-weighted integrands ------------------------

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> ridged_llt(const Eigen::MatrixXd& gram) {
  const auto L = gram.cols();
  double ridge = 1e-10 * gram.trace() / static_cast<double>(L);
  if (!(ridge > 0.0)) ridge = 1e-10;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::MatrixXd g = gram;
    g.diagonal().array() += ridge;
    llt.compute(g);
    if (llt.info() == Eigen::Success) return llt;
    ridge *= 10.0;
  }
  throw std::runtime_error("series projection: Gram matrix is singular");
}

}  // namespace detail

struct SeriesProjector {
  PowerBasis basis;
  Eigen::LLT<Eigen::MatrixXd> llt;  // of the ridged Gram matrix
  Eigen::MatrixXd R;                // n x L design over dataset rows
};

inline SeriesProjector make_series_projector(const Dataset& d, int degree) {
  SeriesProjector p;
  p.basis = make_power_basis(d.x, degree);
  p.R = p.basis.design(d.x);
  p.llt = detail::ridged_llt((p.R.transpose() * p.R) /
                             static_cast<double>(p.R.rows()));
  return p;
}

// information matrix of the fitted logit, (1/n) sum w_i R_i R_i' with
// w = p(1-p); the propensity correction solves against this instead of the
// plain Gram
inline Eigen::LLT<Eigen::MatrixXd> score_llt(const Eigen::MatrixXd& R,
                                             const std::vector<double>& p_row) {
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(R.cols(), R.cols());
  for (Eigen::Index r = 0; r < R.rows(); ++r)
    gram += p_row[static_cast<std::size_t>(r)] *
            (1.0 - p_row[static_cast<std::size_t>(r)]) * R.row(r).transpose() *
            R.row(r);
  gram /= static_cast<double>(R.rows());
  return detail::ridged_llt(gram);
}

// the raw moment (m/n) sum_i W_i g_i R(X_i)
inline Eigen::VectorXd km_moment(const SeriesProjector& p,
                                 const OrderedSubsample& arm,
                                 const std::vector<double>& g, std::size_t n) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p.R.cols());
  const double scale =
      static_cast<double>(arm.size()) / static_cast<double>(n);
  for (std::size_t i = 0; i < arm.size(); ++i)
    if (arm.w[i] != 0.0 && g[i] != 0.0)
      b += (scale * arm.w[i] * g[i]) *
           p.R.row(static_cast<Eigen::Index>(arm.original_index[i]))
               .transpose();
  return b;
}

// coefficients of the weighted projection (m/n) sum_i W_i g_i R(X_i)
inline Eigen::VectorXd series_project(const SeriesProjector& p,
                                      const OrderedSubsample& arm,
                                      const std::vector<double>& g,
                                      std::size_t n) {
  return p.llt.solve(km_moment(p, arm, g, n));
}

inline double clamp01(double v, std::size_t* events) {
  if (v < 0.0) {
    if (events) ++*events;
    return 0.0;
  }
  if (v > 1.0) {
    if (events) ++*events;
    return 1.0;
  }
  return v;
}

// conditional-CDF estimate at one query point; inv_prop holds the
// 1/arm-propensity factor per ordered arm obs
inline double km_series_cdf(const SeriesProjector& p,
                            const OrderedSubsample& arm,
                            const std::vector<double>& inv_prop, double y,
                            const std::vector<double>& x, std::size_t n,
                            std::size_t* clamped = nullptr) {
  std::vector<double> g(arm.size(), 0.0);
  for (std::size_t i = 0; i < arm.size(); ++i)
    if (arm.q[i] <= y) g[i] = inv_prop[i];
  Eigen::VectorXd c = series_project(p, arm, g, n);
  return clamp01(p.basis.eval(x).dot(c), clamped);
}

// textbook correction value -(F1/p + F0/(1-p)) 1{X<=x} built from the two
// conditional-CDF fits; kept as the reference form of the correction -- the
// influence matrices below use its projection onto the logit basis span
// instead, which is what the fixed-degree fit actually propagates
inline double alpha_hat(const SeriesProjector& p, const OrderedSubsample& s1,
                        const OrderedSubsample& s0,
                        const std::vector<double>& inv1,
                        const std::vector<double>& inv0, double prop, double y,
                        const std::vector<double>& xi,
                        const std::vector<double>& xbar, std::size_t n,
                        std::size_t* clamped = nullptr) {
  if (!leq_all(xi, xbar)) return 0.0;
  const double f1 = km_series_cdf(p, s1, inv1, y, xi, n, clamped);
  const double f0 = km_series_cdf(p, s0, inv0, y, xi, n, clamped);
  return -(f1 / prop + f0 / (1.0 - prop));
}

// ---- influence matrices ---------------------------------------------------

struct InfluenceMatrix {
  Eigen::MatrixXd psi;  // n x n_grid, rows in dataset order
  TestKind kind = TestKind::dte;
  std::size_t excluded_points = 0;
  std::size_t series_clamped = 0;
  std::size_t prop_clipped = 0;
};

namespace detail {

inline std::vector<double> row_propensity(const Dataset& d,
                                          const LogitFit& fit,
                                          std::size_t* clip) {
  std::vector<double> p(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) p[r] = fit.predict(d.x[r], clip);
  return p;
}

inline std::vector<double> arm_inverse(const OrderedSubsample& s,
                                       const std::vector<double>& p_row,
                                       bool treated) {
  std::vector<double> inv(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    double p = p_row[s.original_index[i]];
    inv[i] = treated ? 1.0 / p : 1.0 / (1.0 - p);
  }
  return inv;
}

// Propensity-estimation correction of one psi column. The fitted logit only
// moves inside span{R}, so the first-order effect of replacing p by p-hat is
// gamma' I^{-1} R(X_i) (T_i - p-hat_i) with I the score information and
// gamma the moment vector of the integrand's derivative in p. Estimating
// gamma by its KM-weighted sample moment keeps the bootstrap variance
// matched to the fixed-degree fit; the limiting form -(F1/p + F0/(1-p))
// would only be recovered as the basis grows. Because the logit score is
// exactly zero at the fit, each correction column sums to zero.
inline void add_score_correction(Eigen::Ref<Eigen::VectorXd> col,
                                 const SeriesProjector& proj,
                                 const Eigen::LLT<Eigen::MatrixXd>& info,
                                 const Eigen::VectorXd& gamma,
                                 const Eigen::VectorXd& score_resid) {
  col += (proj.R * info.solve(gamma)).cwiseProduct(score_resid);
}

}  // namespace detail

inline InfluenceMatrix influence_dte(const Dataset& d,
                                     const OrderedSubsample& s1,
                                     const OrderedSubsample& s0,
                                     const LogitFit& pfit, int series_degree,
                                     const EvaluationGrid& grid,
                                     int threads = 1) {
  const std::size_t n = d.size();
  InfluenceMatrix out;
  out.kind = TestKind::dte;
  out.psi.resize(static_cast<Eigen::Index>(n),
                 static_cast<Eigen::Index>(grid.size()));
  const ArmStute a1 = make_arm_stute(s1), a0 = make_arm_stute(s0);
  out.excluded_points = a1.excluded_points + a0.excluded_points;
  const SeriesProjector proj = make_series_projector(d, series_degree);
  std::size_t clip = 0;
  const std::vector<double> p_row = detail::row_propensity(d, pfit, &clip);
  out.prop_clipped = clip;
  const std::vector<double> inv1 = detail::arm_inverse(s1, p_row, true);
  const std::vector<double> inv0 = detail::arm_inverse(s0, p_row, false);
  const Eigen::LLT<Eigen::MatrixXd> info = score_llt(proj.R, p_row);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    resid(static_cast<Eigen::Index>(r)) =
        static_cast<double>(d.t[r]) - p_row[r];
  // derivative of the per-arm integrands in p: d(1/p) picks (1-p)/p on the
  // treated side, d(-1/(1-p)) picks p/(1-p) on the control side, both with
  // an overall minus
  std::vector<double> dv1(s1.size()), dv0(s0.size());
  for (std::size_t i = 0; i < s1.size(); ++i)
    dv1[i] = (1.0 - p_row[s1.original_index[i]]) * inv1[i];
  for (std::size_t j = 0; j < s0.size(); ++j)
    dv0[j] = p_row[s0.original_index[j]] * inv0[j];

  parallel_for(grid.size(), threads, [&](std::size_t g) {
    const double y = grid.y[g];
    const auto& xb = grid.x[g];
    std::vector<double> eta1, eta0;
    arm_eta(a1,
            [&](std::size_t i) {
              return (s1.q[i] <= y && leq_all(s1.x[i], xb)) ? inv1[i] : 0.0;
            },
            eta1);
    arm_eta(a0,
            [&](std::size_t j) {
              return (s0.q[j] <= y && leq_all(s0.x[j], xb)) ? inv0[j] : 0.0;
            },
            eta0);
    std::vector<double> g1(s1.size(), 0.0), g0(s0.size(), 0.0);
    for (std::size_t i = 0; i < s1.size(); ++i)
      if (s1.q[i] <= y && leq_all(s1.x[i], xb)) g1[i] = dv1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      if (s0.q[j] <= y && leq_all(s0.x[j], xb)) g0[j] = dv0[j];
    const Eigen::VectorXd gamma =
        -(km_moment(proj, s1, g1, n) + km_moment(proj, s0, g0, n));
    auto col = out.psi.col(static_cast<Eigen::Index>(g));
    col.setZero();
    for (std::size_t i = 0; i < s1.size(); ++i)
      col(static_cast<Eigen::Index>(s1.original_index[i])) = eta1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      col(static_cast<Eigen::Index>(s0.original_index[j])) = -eta0[j];
    detail::add_score_correction(col, proj, info, gamma, resid);
  });
  return out;
}

// shared core for the restricted-mean family: fills psi columns for the
// cate integrand q*1{q<=tau} over a covariate grid, and exposes the ate
// column and the pooled-CDF pieces the homogeneity test needs
namespace detail {

struct MeanInfluenceParts {
  Eigen::MatrixXd psi_cate;   // n x n_grid
  Eigen::MatrixXd psi_pool;   // n x n_grid (no propensity correction)
  Eigen::VectorXd psi_ate;    // n
  std::vector<double> f_pool;  // pooled covariate CDF per grid point
  double ate = 0.0;
  std::size_t excluded = 0, clipped = 0;
};

inline MeanInfluenceParts mean_influence_parts(
    const Dataset& d, const OrderedSubsample& s1, const OrderedSubsample& s0,
    const LogitFit& pfit, int series_degree, const EvaluationGrid& x_grid,
    double tau_bar, int threads, bool want_pool) {
  const std::size_t n = d.size();
  MeanInfluenceParts out;
  const ArmStute a1 = make_arm_stute(s1), a0 = make_arm_stute(s0);
  out.excluded = a1.excluded_points + a0.excluded_points;
  const SeriesProjector proj = make_series_projector(d, series_degree);
  std::size_t clip = 0;
  const std::vector<double> p_row = row_propensity(d, pfit, &clip);
  out.clipped = clip;
  const std::vector<double> inv1 = arm_inverse(s1, p_row, true);
  const std::vector<double> inv0 = arm_inverse(s0, p_row, false);
  const Eigen::LLT<Eigen::MatrixXd> info = score_llt(proj.R, p_row);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    resid(static_cast<Eigen::Index>(r)) =
        static_cast<double>(d.t[r]) - p_row[r];
  std::vector<double> dv1(s1.size()), dv0(s0.size());
  for (std::size_t i = 0; i < s1.size(); ++i)
    dv1[i] = s1.q[i] <= tau_bar
                 ? s1.q[i] * (1.0 - p_row[s1.original_index[i]]) * inv1[i]
                 : 0.0;
  for (std::size_t j = 0; j < s0.size(); ++j)
    dv0[j] = s0.q[j] <= tau_bar
                 ? s0.q[j] * p_row[s0.original_index[j]] * inv0[j]
                 : 0.0;

  const std::vector<double> pv1 = [&] {
    std::vector<double> v(s1.size());
    for (std::size_t i = 0; i < s1.size(); ++i)
      v[i] = p_row[s1.original_index[i]];
    return v;
  }();
  const std::vector<double> pv0 = [&] {
    std::vector<double> v(s0.size());
    for (std::size_t j = 0; j < s0.size(); ++j)
      v[j] = p_row[s0.original_index[j]];
    return v;
  }();
  out.ate = ate_point(s1, s0, pv1, pv0, tau_bar, n);

  // ate column: same integrand, indicator identically one
  {
    std::vector<double> eta1, eta0;
    arm_eta(a1,
            [&](std::size_t i) {
              return s1.q[i] <= tau_bar ? s1.q[i] * inv1[i] : 0.0;
            },
            eta1);
    arm_eta(a0,
            [&](std::size_t j) {
              return s0.q[j] <= tau_bar ? s0.q[j] * inv0[j] : 0.0;
            },
            eta0);
    out.psi_ate = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < s1.size(); ++i)
      out.psi_ate(static_cast<Eigen::Index>(s1.original_index[i])) = eta1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      out.psi_ate(static_cast<Eigen::Index>(s0.original_index[j])) = -eta0[j];
    const Eigen::VectorXd gamma =
        -(km_moment(proj, s1, dv1, n) + km_moment(proj, s0, dv0, n));
    add_score_correction(out.psi_ate, proj, info, gamma, resid);
  }

  out.psi_cate.resize(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(x_grid.size()));
  if (want_pool) {
    out.psi_pool.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(x_grid.size()));
    out.f_pool.assign(x_grid.size(), 0.0);
  }

  parallel_for(x_grid.size(), threads, [&](std::size_t g) {
    const auto& xb = x_grid.x[g];
    std::vector<double> eta1, eta0;
    arm_eta(a1,
            [&](std::size_t i) {
              return (s1.q[i] <= tau_bar && leq_all(s1.x[i], xb))
                         ? s1.q[i] * inv1[i]
                         : 0.0;
            },
            eta1);
    arm_eta(a0,
            [&](std::size_t j) {
              return (s0.q[j] <= tau_bar && leq_all(s0.x[j], xb))
                         ? s0.q[j] * inv0[j]
                         : 0.0;
            },
            eta0);
    auto col = out.psi_cate.col(static_cast<Eigen::Index>(g));
    col.setZero();
    for (std::size_t i = 0; i < s1.size(); ++i)
      col(static_cast<Eigen::Index>(s1.original_index[i])) = eta1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      col(static_cast<Eigen::Index>(s0.original_index[j])) = -eta0[j];
    std::vector<double> g1(s1.size(), 0.0), g0(s0.size(), 0.0);
    for (std::size_t i = 0; i < s1.size(); ++i)
      if (leq_all(s1.x[i], xb)) g1[i] = dv1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      if (leq_all(s0.x[j], xb)) g0[j] = dv0[j];
    const Eigen::VectorXd gamma =
        -(km_moment(proj, s1, g1, n) + km_moment(proj, s0, g0, n));
    add_score_correction(col, proj, info, gamma, resid);
    if (!want_pool) return;
    // pooled covariate CDF: both arms enter with + and no propensity factor
    std::vector<double> etap1, etap0;
    arm_eta(a1,
            [&](std::size_t i) {
              return leq_all(s1.x[i], xb) ? 1.0 : 0.0;
            },
            etap1);
    arm_eta(a0,
            [&](std::size_t j) {
              return leq_all(s0.x[j], xb) ? 1.0 : 0.0;
            },
            etap0);
    auto pcol = out.psi_pool.col(static_cast<Eigen::Index>(g));
    pcol.setZero();
    for (std::size_t i = 0; i < s1.size(); ++i)
      pcol(static_cast<Eigen::Index>(s1.original_index[i])) = etap1[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      pcol(static_cast<Eigen::Index>(s0.original_index[j])) = etap0[j];
    double fp = 0.0;
    const double sc1 = static_cast<double>(s1.size()) / static_cast<double>(n);
    const double sc0 = static_cast<double>(s0.size()) / static_cast<double>(n);
    for (std::size_t i = 0; i < s1.size(); ++i)
      if (s1.w[i] != 0.0 && leq_all(s1.x[i], xb)) fp += sc1 * s1.w[i];
    for (std::size_t j = 0; j < s0.size(); ++j)
      if (s0.w[j] != 0.0 && leq_all(s0.x[j], xb)) fp += sc0 * s0.w[j];
    out.f_pool[g] = fp;
  });
  return out;
}

}  // namespace detail

inline InfluenceMatrix influence_cate(const Dataset& d,
                                      const OrderedSubsample& s1,
                                      const OrderedSubsample& s0,
                                      const LogitFit& pfit, int series_degree,
                                      const EvaluationGrid& x_grid,
                                      double tau_bar, int threads = 1) {
  auto parts = detail::mean_influence_parts(d, s1, s0, pfit, series_degree,
                                            x_grid, tau_bar, threads, false);
  InfluenceMatrix out;
  out.kind = TestKind::cate;
  out.psi = std::move(parts.psi_cate);
  out.excluded_points = parts.excluded;
  out.prop_clipped = parts.clipped;
  return out;
}

// influence of cate(x) - ate * pooled covariate CDF(x): the delta-method
// composition of the three estimates, so each column keeps mean equal to the
// recentered process value
inline InfluenceMatrix influence_hom(const Dataset& d,
                                     const OrderedSubsample& s1,
                                     const OrderedSubsample& s0,
                                     const LogitFit& pfit, int series_degree,
                                     const EvaluationGrid& x_grid,
                                     double tau_bar, int threads = 1) {
  auto parts = detail::mean_influence_parts(d, s1, s0, pfit, series_degree,
                                            x_grid, tau_bar, threads, true);
  InfluenceMatrix out;
  out.kind = TestKind::hom;
  out.excluded_points = parts.excluded;
  out.prop_clipped = parts.clipped;
  out.psi.resize(parts.psi_cate.rows(), parts.psi_cate.cols());
  for (Eigen::Index g = 0; g < out.psi.cols(); ++g) {
    const double fp = parts.f_pool[static_cast<std::size_t>(g)];
    out.psi.col(g) = parts.psi_cate.col(g) - parts.ate * parts.psi_pool.col(g) -
                     fp * parts.psi_ate +
                     Eigen::VectorXd::Constant(out.psi.rows(), parts.ate * fp);
  }
  return out;
}

inline InfluenceMatrix influence_ldte(const Dataset& d,
                                      const OrderedSubsample cells[2][2],
                                      const LogitFit& qfit, int series_degree,
                                      const EvaluationGrid& grid,
                                      int threads = 1) {
  const std::size_t n = d.size();
  InfluenceMatrix out;
  out.kind = TestKind::ldte;
  out.psi.resize(static_cast<Eigen::Index>(n),
                 static_cast<Eigen::Index>(grid.size()));
  ArmStute stutes[2][2];
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z) {
      stutes[t][z] = make_arm_stute(cells[t][z]);
      out.excluded_points += stutes[t][z].excluded_points;
    }
  const SeriesProjector proj = make_series_projector(d, series_degree);
  std::size_t clip = 0;
  const std::vector<double> q_row = detail::row_propensity(d, qfit, &clip);
  out.prop_clipped = clip;
  const Eigen::LLT<Eigen::MatrixXd> info = score_llt(proj.R, q_row);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    resid(static_cast<Eigen::Index>(r)) =
        static_cast<double>(d.z[r]) - q_row[r];
  std::vector<double> inv[2][2], dv[2][2];
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z) {
      const OrderedSubsample& s = cells[t][z];
      inv[t][z] = detail::arm_inverse(s, q_row, z == 1);
      dv[t][z].resize(s.size());
      // z=1 cells carry 1/q-hat, z=0 cells carry 1/(1-q-hat); either way the
      // derivative in the instrument propensity contributes with a minus
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double qr = q_row[s.original_index[i]];
        dv[t][z][i] = (z == 1 ? 1.0 - qr : qr) * inv[t][z][i];
      }
    }

  parallel_for(grid.size(), threads, [&](std::size_t g) {
    const double y = grid.y[g];
    const auto& xb = grid.x[g];
    auto col = out.psi.col(static_cast<Eigen::Index>(g));
    col.setZero();
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(proj.R.cols());
    for (int t = 0; t < 2; ++t) {
      for (int z = 0; z < 2; ++z) {
        const OrderedSubsample& s = cells[t][z];
        const std::vector<double>& iv = inv[t][z];
        const double sign = z == 1 ? 1.0 : -1.0;
        std::vector<double> eta;
        arm_eta(stutes[t][z],
                [&](std::size_t i) {
                  return (s.q[i] <= y && leq_all(s.x[i], xb)) ? iv[i] : 0.0;
                },
                eta);
        for (std::size_t i = 0; i < s.size(); ++i)
          col(static_cast<Eigen::Index>(s.original_index[i])) =
              sign * eta[i];
        std::vector<double> gi(s.size(), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i)
          if (s.q[i] <= y && leq_all(s.x[i], xb)) gi[i] = dv[t][z][i];
        gamma -= km_moment(proj, s, gi, n);
      }
    }
    detail::add_score_correction(col, proj, info, gamma, resid);
  });
  return out;
}

}  // namespace kmte
