#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmte/dataset.hpp"

namespace kmte {

// one arm (or cell), ordered by duration with covariates carried along as
// concomitants; w holds the Kaplan-Meier mass of each ordered observation
struct OrderedSubsample {
  std::vector<double> q;
  std::vector<int> delta;
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> original_index;  // row in the source dataset
  std::vector<double> w;

  std::size_t size() const { return q.size(); }

  double total_mass() const {
    return std::accumulate(w.begin(), w.end(), 0.0);
  }
};

// ties: uncensored before censored at equal q, otherwise input order kept
inline std::vector<std::size_t> concomitant_order(
    const std::vector<double>& q, const std::vector<int>& delta) {
  std::vector<std::size_t> idx(q.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (q[a] != q[b]) return q[a] < q[b];
                     return delta[a] > delta[b];
                   });
  return idx;
}

// W_[i] = (delta_[i]/m) * prod_{j<i, delta_[j]=0} (m-j+1)/(m-j); written as a
// product over censored predecessors only, so an uncensored sample yields
// exactly 1/m per observation
inline std::vector<double> km_weights(const std::vector<int>& ordered_delta) {
  const std::size_t m = ordered_delta.size();
  std::vector<double> w(m, 0.0);
  double prod = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (ordered_delta[i]) {
      w[i] = prod / static_cast<double>(m);
    } else if (i + 1 < m) {
      prod *= static_cast<double>(m - i) / static_cast<double>(m - i - 1);
    }
  }
  return w;
}

inline OrderedSubsample ordered_subsample(const Dataset& d,
                                          const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty subsample");
  std::vector<double> q(rows.size());
  std::vector<int> delta(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    q[i] = d.q[rows[i]];
    delta[i] = d.delta[rows[i]];
  }
  auto order = concomitant_order(q, delta);
  OrderedSubsample s;
  s.q.reserve(rows.size());
  s.delta.reserve(rows.size());
  s.x.reserve(rows.size());
  s.original_index.reserve(rows.size());
  for (std::size_t pos : order) {
    s.q.push_back(q[pos]);
    s.delta.push_back(delta[pos]);
    s.x.push_back(d.x[rows[pos]]);
    s.original_index.push_back(rows[pos]);
  }
  s.w = km_weights(s.delta);
  return s;
}

// sum_i W_i f(i) over the ordered subsample
template <class F>
double km_integrate(const OrderedSubsample& s, F&& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.w[i] != 0.0) {
      const double v = f(i);
      if (!std::isfinite(v))
        throw std::domain_error("km_integrate: non-finite integrand at q=" +
                                std::to_string(s.q[i]));
      acc += s.w[i] * v;
    }
  return acc;
}

// F-hat(y, x) = sum_i W_i 1{q_i <= y, x_i <= x}; right-continuous step in y
inline double product_limit_cdf(const OrderedSubsample& s, double y,
                                const std::vector<double>& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.q[i] > y) break;
    if (s.w[i] != 0.0 && leq_all(s.x[i], x)) acc += s.w[i];
  }
  return acc;
}

// sum_i 1{q_i <= y, x_i <= x} delta_i / #at-risk, kept for cross-checking the
// weight path via the jump relation F = 1 - prod(1 - jumps)
inline double cumulative_hazard(const OrderedSubsample& s, double y,
                                const std::vector<double>& x) {
  double acc = 0.0;
  const double m = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.q[i] > y) break;
    if (s.delta[i] && leq_all(s.x[i], x))
      acc += 1.0 / (m - static_cast<double>(i));
  }
  return acc;
}

}  // namespace kmte
