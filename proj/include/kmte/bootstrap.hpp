#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kmte/influence.hpp"
#include "kmte/parallel.hpp"
#include "kmte/rng.hpp"

namespace kmte {

enum class MultiplierLaw { mammen, rademacher };

inline const char* multiplier_law_name(MultiplierLaw law) {
  return law == MultiplierLaw::mammen ? "mammen" : "rademacher";
}

// two-point multiplier with mean 0 and variance 1:
// V = 1-k with probability k/sqrt(5), V = k otherwise, k the golden ratio
inline std::vector<double> multiplier_draw(std::size_t n, MultiplierLaw law,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  if (law == MultiplierLaw::mammen) {
    const double kappa = (std::sqrt(5.0) + 1.0) / 2.0;
    const double p_low = kappa / std::sqrt(5.0);
    for (auto& x : v) x = rng.uniform01() < p_low ? 1.0 - kappa : kappa;
  } else {
    for (auto& x : v) x = rng.uniform01() < 0.5 ? -1.0 : 1.0;
  }
  return v;
}

struct BootstrapResult {
  double statistic = 0.0;
  std::vector<double> replicates;
  double critical_value = 0.0;
  double p_value = 1.0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  bool smoothed = false;
};

// ceil(B*(1-alpha))-th order statistic
inline double critical_value_at(std::vector<double> replicates, double alpha) {
  if (replicates.empty())
    throw std::invalid_argument("critical value needs replicates");
  std::sort(replicates.begin(), replicates.end());
  const double rank =
      std::ceil(static_cast<double>(replicates.size()) * (1.0 - alpha));
  std::size_t idx = rank <= 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  if (idx >= replicates.size()) idx = replicates.size() - 1;
  return replicates[idx];
}

inline double bootstrap_p_value(const std::vector<double>& replicates,
                                double statistic, bool smoothed) {
  std::size_t count = 0;
  for (double r : replicates)
    if (r >= statistic) ++count;
  if (smoothed)
    return static_cast<double>(1 + count) /
           static_cast<double>(replicates.size() + 1);
  return static_cast<double>(count) / static_cast<double>(replicates.size());
}

// one pass over B multiplier draws computing both functionals of the
// resampled process (1/n) psi^T V; replicate b depends only on (seed, b), so
// results are identical for any worker count
struct BootstrapReplicates {
  std::vector<double> ks;
  std::vector<double> cvm;
};

inline BootstrapReplicates bootstrap_run(const Eigen::MatrixXd& psi,
                                         std::size_t B, std::uint64_t seed,
                                         MultiplierLaw law, int threads = 1) {
  if (B < 1) throw std::invalid_argument("bootstrap needs B >= 1");
  const std::size_t n = static_cast<std::size_t>(psi.rows());
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  BootstrapReplicates out;
  out.ks.resize(B);
  out.cvm.resize(B);
  parallel_for(B, threads, [&](std::size_t b) {
    std::vector<double> v = multiplier_draw(n, law, derive_seed(seed, b));
    Eigen::Map<const Eigen::VectorXd> vm(v.data(),
                                         static_cast<Eigen::Index>(n));
    Eigen::VectorXd u = psi.transpose() * vm;  // n * resampled process
    double mx = 0.0, ss = 0.0;
    for (Eigen::Index g = 0; g < u.size(); ++g) {
      const double a = std::abs(u(g));
      if (a > mx) mx = a;
      ss += u(g) * u(g);
    }
    out.ks[b] = mx / sqrt_n;
    out.cvm[b] =
        ss / (static_cast<double>(u.size()) * static_cast<double>(n));
  });
  return out;
}

inline BootstrapResult bootstrap_test(const InfluenceMatrix& psi,
                                      StatType stat, double observed,
                                      std::size_t B, double alpha,
                                      std::uint64_t seed, MultiplierLaw law,
                                      int threads = 1, bool smoothed = false) {
  BootstrapReplicates reps = bootstrap_run(psi.psi, B, seed, law, threads);
  BootstrapResult r;
  r.statistic = observed;
  r.replicates = stat == StatType::ks ? std::move(reps.ks)
                                      : std::move(reps.cvm);
  r.critical_value = critical_value_at(r.replicates, alpha);
  r.p_value = bootstrap_p_value(r.replicates, observed, smoothed);
  r.B = B;
  r.seed = seed;
  r.smoothed = smoothed;
  return r;
}

}  // namespace kmte
