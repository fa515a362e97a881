#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace kmte {

constexpr double kInf = std::numeric_limits<double>::infinity();

// one sample: duration Q, non-censoring indicator delta (1 = event observed),
// treatment T, covariate row X, optional binary instrument Z
struct Dataset {
  std::vector<double> q;
  std::vector<int> delta;
  std::vector<int> t;
  std::vector<std::vector<double>> x;  // n rows, each of length k
  std::vector<int> z;                  // empty unless has_instrument
  std::size_t k = 0;
  bool has_instrument = false;

  std::size_t size() const { return q.size(); }
};

// throws with the offending 1-based row on any violated field contract
inline void validate_dataset(const Dataset& d) {
  const std::size_t n = d.size();
  if (n == 0) throw std::invalid_argument("dataset is empty");
  if (d.delta.size() != n || d.t.size() != n || d.x.size() != n ||
      (d.has_instrument && d.z.size() != n))
    throw std::invalid_argument("dataset columns have unequal lengths");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string row = "row " + std::to_string(i + 1);
    if (!std::isfinite(d.q[i]) || d.q[i] < 0.0)
      throw std::invalid_argument(row + ": q must be finite and >= 0");
    if (d.delta[i] != 0 && d.delta[i] != 1)
      throw std::invalid_argument(row + ": delta must be 0 or 1");
    if (d.t[i] != 0 && d.t[i] != 1)
      throw std::invalid_argument(row + ": t must be 0 or 1");
    if (d.has_instrument && d.z[i] != 0 && d.z[i] != 1)
      throw std::invalid_argument(row + ": z must be 0 or 1");
    if (d.x[i].size() != d.k)
      throw std::invalid_argument(row + ": covariate row has wrong length");
    for (double v : d.x[i])
      if (!std::isfinite(v))
        throw std::invalid_argument(row + ": covariate must be finite");
  }
}

// stable partition into treated / control row indices
struct ArmSplit {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
};

inline ArmSplit split_by_arm(const Dataset& d) {
  ArmSplit s;
  for (std::size_t i = 0; i < d.size(); ++i)
    (d.t[i] == 1 ? s.treated : s.control).push_back(i);
  if (s.treated.empty() || s.control.empty())
    throw std::invalid_argument("degenerate design: a treatment arm is empty");
  return s;
}

// stable partition into the four (t, z) cells; cell[t][z]
struct CellSplit {
  std::array<std::array<std::vector<std::size_t>, 2>, 2> cell;
};

inline CellSplit split_by_arm_instrument(const Dataset& d) {
  if (!d.has_instrument)
    throw std::invalid_argument("dataset has no instrument column");
  CellSplit s;
  for (std::size_t i = 0; i < d.size(); ++i)
    s.cell[d.t[i]][d.z[i]].push_back(i);
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z)
      if (s.cell[t][z].empty())
        throw std::invalid_argument(
            "degenerate instrument design: cell (t=" + std::to_string(t) +
            ", z=" + std::to_string(z) + ") is empty");
  return s;
}

enum class GridMode { sample_pairs, full_product, custom };

inline const char* grid_mode_name(GridMode m) {
  switch (m) {
    case GridMode::sample_pairs: return "sample-pairs";
    case GridMode::full_product: return "full-product";
    default: return "custom";
  }
}

// evaluation points (y_j, x_j); covariate-only grids carry y = +inf
struct EvaluationGrid {
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  double tau_bar = kInf;
  GridMode mode = GridMode::custom;
  bool covariate_only = false;

  std::size_t size() const { return y.size(); }
};

// sample_pairs: one point per observation with Q <= tau_bar (multiplicity
// kept, the CvM statistic integrates against the empirical measure);
// full_product: distinct Q values x distinct covariate rows
inline EvaluationGrid default_grid(const Dataset& d, double tau_bar,
                                   GridMode mode) {
  if (d.size() == 0) throw std::invalid_argument("dataset is empty");
  EvaluationGrid g;
  g.tau_bar = tau_bar;
  g.mode = mode;
  if (mode == GridMode::sample_pairs) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.q[i] <= tau_bar) {
        g.y.push_back(d.q[i]);
        g.x.push_back(d.x[i]);
      }
    }
  } else if (mode == GridMode::full_product) {
    std::vector<double> ys;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.q[i] <= tau_bar) ys.push_back(d.q[i]);
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    std::vector<std::vector<double>> xs = d.x;
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    for (double yv : ys) {
      for (const auto& xv : xs) {
        g.y.push_back(yv);
        g.x.push_back(xv);
      }
    }
  } else {
    throw std::invalid_argument("default_grid requires a non-custom mode");
  }
  if (g.size() == 0)
    throw std::invalid_argument("evaluation grid is empty after truncation");
  return g;
}

// covariate-only grid on the sample rows (for the cate / hom processes)
inline EvaluationGrid default_covariate_grid(const Dataset& d,
                                             double tau_bar) {
  if (d.size() == 0) throw std::invalid_argument("dataset is empty");
  EvaluationGrid g;
  g.tau_bar = tau_bar;
  g.mode = GridMode::sample_pairs;
  g.covariate_only = true;
  g.y.assign(d.size(), kInf);
  g.x = d.x;
  return g;
}

// componentwise x <= bound, the indicator weighting family everywhere
inline bool leq_all(const std::vector<double>& x,
                    const std::vector<double>& bound) {
  for (std::size_t c = 0; c < x.size(); ++c)
    if (!(x[c] <= bound[c])) return false;
  return true;
}

}  // namespace kmte
