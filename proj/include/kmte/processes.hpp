#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmte/dataset.hpp"
#include "kmte/km_weights.hpp"
#include "kmte/series_logit.hpp"

namespace kmte {

enum class TestKind { dte, cate, hom, ldte };

inline const char* test_kind_name(TestKind k) {
  switch (k) {
    case TestKind::dte: return "dte";
    case TestKind::cate: return "cate";
    case TestKind::hom: return "hom";
    case TestKind::ldte: return "ldte";
  }
  return "?";
}

enum class StatType { ks, cvm };

inline const char* stat_type_name(StatType s) {
  return s == StatType::ks ? "ks" : "cvm";
}

struct ProcessValues {
  EvaluationGrid grid;
  std::vector<double> values;
  TestKind kind = TestKind::dte;
  double tau_bar = kInf;
};

// fitted propensity at each ordered observation, clipped away from 0/1
inline std::vector<double> propensity_at(const OrderedSubsample& s,
                                         const LogitFit& fit,
                                         std::size_t* clip_count = nullptr) {
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    p[i] = fit.predict(s.x[i], clip_count);
  return p;
}

// ---- DTE: KM-weighted joint sub-CDF difference -------------------------

inline ProcessValues dte_process(const OrderedSubsample& treated,
                                 const OrderedSubsample& control,
                                 const std::vector<double>& p_treated,
                                 const std::vector<double>& p_control,
                                 const EvaluationGrid& grid, std::size_t n) {
  ProcessValues out;
  out.grid = grid;
  out.kind = TestKind::dte;
  out.tau_bar = grid.tau_bar;
  out.values.resize(grid.size());
  const double a1 =
      static_cast<double>(treated.size()) / static_cast<double>(n);
  const double a0 =
      static_cast<double>(control.size()) / static_cast<double>(n);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double y = grid.y[g];
    const auto& xb = grid.x[g];
    double s1 = 0.0;
    for (std::size_t i = 0; i < treated.size(); ++i) {
      if (treated.w[i] == 0.0 || treated.q[i] > y) continue;
      if (leq_all(treated.x[i], xb)) s1 += treated.w[i] / p_treated[i];
    }
    double s0 = 0.0;
    for (std::size_t j = 0; j < control.size(); ++j) {
      if (control.w[j] == 0.0 || control.q[j] > y) continue;
      if (leq_all(control.x[j], xb)) s0 += control.w[j] / (1.0 - p_control[j]);
    }
    out.values[g] = a1 * s1 - a0 * s0;
  }
  return out;
}

inline ProcessValues dte_process(const OrderedSubsample& treated,
                                 const OrderedSubsample& control,
                                 const LogitFit& fit,
                                 const EvaluationGrid& grid, std::size_t n,
                                 std::size_t* clip_count = nullptr) {
  return dte_process(treated, control, propensity_at(treated, fit, clip_count),
                     propensity_at(control, fit, clip_count), grid, n);
}

// ---- CATE: restricted-mean difference as a process in x ----------------

inline ProcessValues cate_process(const OrderedSubsample& treated,
                                  const OrderedSubsample& control,
                                  const std::vector<double>& p_treated,
                                  const std::vector<double>& p_control,
                                  const EvaluationGrid& x_grid, double tau_bar,
                                  std::size_t n) {
  ProcessValues out;
  out.grid = x_grid;
  out.kind = TestKind::cate;
  out.tau_bar = tau_bar;
  out.values.resize(x_grid.size());
  const double a1 =
      static_cast<double>(treated.size()) / static_cast<double>(n);
  const double a0 =
      static_cast<double>(control.size()) / static_cast<double>(n);
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const auto& xb = x_grid.x[g];
    double s1 = 0.0;
    for (std::size_t i = 0; i < treated.size(); ++i) {
      if (treated.w[i] == 0.0 || treated.q[i] > tau_bar) continue;
      if (leq_all(treated.x[i], xb))
        s1 += treated.w[i] * treated.q[i] / p_treated[i];
    }
    double s0 = 0.0;
    for (std::size_t j = 0; j < control.size(); ++j) {
      if (control.w[j] == 0.0 || control.q[j] > tau_bar) continue;
      if (leq_all(control.x[j], xb))
        s0 += control.w[j] * control.q[j] / (1.0 - p_control[j]);
    }
    out.values[g] = a1 * s1 - a0 * s0;
  }
  return out;
}

inline ProcessValues cate_process(const OrderedSubsample& treated,
                                  const OrderedSubsample& control,
                                  const LogitFit& fit,
                                  const EvaluationGrid& x_grid, double tau_bar,
                                  std::size_t n,
                                  std::size_t* clip_count = nullptr) {
  return cate_process(treated, control,
                      propensity_at(treated, fit, clip_count),
                      propensity_at(control, fit, clip_count), x_grid, tau_bar,
                      n);
}

// ---- restricted ATE point estimate --------------------------------------

inline double ate_point(const OrderedSubsample& treated,
                        const OrderedSubsample& control,
                        const std::vector<double>& p_treated,
                        const std::vector<double>& p_control, double tau_bar,
                        std::size_t n) {
  const double a1 =
      static_cast<double>(treated.size()) / static_cast<double>(n);
  const double a0 =
      static_cast<double>(control.size()) / static_cast<double>(n);
  double s1 = 0.0;
  for (std::size_t i = 0; i < treated.size(); ++i)
    if (treated.w[i] != 0.0 && treated.q[i] <= tau_bar)
      s1 += treated.w[i] * treated.q[i] / p_treated[i];
  double s0 = 0.0;
  for (std::size_t j = 0; j < control.size(); ++j)
    if (control.w[j] != 0.0 && control.q[j] <= tau_bar)
      s0 += control.w[j] * control.q[j] / (1.0 - p_control[j]);
  return a1 * s1 - a0 * s0;
}

inline double ate_point(const OrderedSubsample& treated,
                        const OrderedSubsample& control, const LogitFit& fit,
                        double tau_bar, std::size_t n,
                        std::size_t* clip_count = nullptr) {
  return ate_point(treated, control, propensity_at(treated, fit, clip_count),
                   propensity_at(control, fit, clip_count), tau_bar, n);
}

// ---- homogeneity: CATE process recentered by the ATE inside each arm ----

inline ProcessValues hom_process(const OrderedSubsample& treated,
                                 const OrderedSubsample& control,
                                 const std::vector<double>& p_treated,
                                 const std::vector<double>& p_control,
                                 const EvaluationGrid& x_grid, double tau_bar,
                                 std::size_t n) {
  const double ate =
      ate_point(treated, control, p_treated, p_control, tau_bar, n);
  ProcessValues out;
  out.grid = x_grid;
  out.kind = TestKind::hom;
  out.tau_bar = tau_bar;
  out.values.resize(x_grid.size());
  const double a1 =
      static_cast<double>(treated.size()) / static_cast<double>(n);
  const double a0 =
      static_cast<double>(control.size()) / static_cast<double>(n);
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const auto& xb = x_grid.x[g];
    double s1 = 0.0;
    for (std::size_t i = 0; i < treated.size(); ++i) {
      if (treated.w[i] == 0.0 || !leq_all(treated.x[i], xb)) continue;
      double integrand =
          (treated.q[i] <= tau_bar ? treated.q[i] / p_treated[i] : 0.0) - ate;
      s1 += treated.w[i] * integrand;
    }
    double s0 = 0.0;
    for (std::size_t j = 0; j < control.size(); ++j) {
      if (control.w[j] == 0.0 || !leq_all(control.x[j], xb)) continue;
      double integrand =
          (control.q[j] <= tau_bar ? control.q[j] / (1.0 - p_control[j])
                                   : 0.0) +
          ate;
      s0 += control.w[j] * integrand;
    }
    out.values[g] = a1 * s1 - a0 * s0;
  }
  return out;
}

inline ProcessValues hom_process(const OrderedSubsample& treated,
                                 const OrderedSubsample& control,
                                 const LogitFit& fit,
                                 const EvaluationGrid& x_grid, double tau_bar,
                                 std::size_t n,
                                 std::size_t* clip_count = nullptr) {
  return hom_process(treated, control, propensity_at(treated, fit, clip_count),
                     propensity_at(control, fit, clip_count), x_grid, tau_bar,
                     n);
}

// ---- LDTE: instrumented version over the four (t,z) cells ----------------

// cell[t][z]; the z=1 cells enter with +, z=0 with -, each divided by the
// probability of its own instrument arm
inline ProcessValues ldte_process(
    const OrderedSubsample cells[2][2],
    const std::vector<double> q_at_cells[2][2],  // fitted P(Z=1|X) per obs
    const EvaluationGrid& grid, std::size_t n) {
  ProcessValues out;
  out.grid = grid;
  out.kind = TestKind::ldte;
  out.tau_bar = grid.tau_bar;
  out.values.assign(grid.size(), 0.0);
  for (int t = 0; t < 2; ++t) {
    for (int z = 0; z < 2; ++z) {
      const OrderedSubsample& cell = cells[t][z];
      const std::vector<double>& qv = q_at_cells[t][z];
      const double sign = (z == 1) ? 1.0 : -1.0;
      const double a =
          static_cast<double>(cell.size()) / static_cast<double>(n);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double y = grid.y[g];
        const auto& xb = grid.x[g];
        double s = 0.0;
        for (std::size_t i = 0; i < cell.size(); ++i) {
          if (cell.w[i] == 0.0 || cell.q[i] > y) continue;
          if (!leq_all(cell.x[i], xb)) continue;
          s += cell.w[i] / (z == 1 ? qv[i] : 1.0 - qv[i]);
        }
        out.values[g] += sign * a * s;
      }
    }
  }
  return out;
}

inline ProcessValues ldte_process(const OrderedSubsample cells[2][2],
                                  const LogitFit& qfit,
                                  const EvaluationGrid& grid, std::size_t n,
                                  std::size_t* clip_count = nullptr) {
  std::vector<double> q_at[2][2];
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z)
      q_at[t][z] = propensity_at(cells[t][z], qfit, clip_count);
  return ldte_process(cells, q_at, grid, n);
}

// ---- functionals ---------------------------------------------------------

inline double ks_statistic(const ProcessValues& p, std::size_t n) {
  double m = 0.0;
  for (double v : p.values) m = std::max(m, std::abs(v));
  return std::sqrt(static_cast<double>(n)) * m;
}

inline double cvm_statistic(const ProcessValues& p, std::size_t n) {
  if (p.grid.mode == GridMode::full_product)
    throw std::invalid_argument(
        "cvm statistic needs a sample_pairs grid (grid average is an "
        "empirical-measure integral); full_product mixes the measure");
  if (p.values.empty()) return 0.0;
  double s = 0.0;
  for (double v : p.values) s += v * v;
  return static_cast<double>(n) * s / static_cast<double>(p.values.size());
}

}  // namespace kmte
