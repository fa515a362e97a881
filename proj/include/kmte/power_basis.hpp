#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace kmte {

// polynomial basis in k covariates, all exponent vectors with |lambda| <= d,
// graded lexicographic order; covariates are affinely mapped to [0,1] using
// the training-sample range so powers stay well scaled
struct PowerBasis {
  std::size_t k = 1;
  int degree = 1;
  std::vector<std::vector<int>> exponents;
  std::vector<double> shift;  // per-coordinate lower bound
  std::vector<double> scale;  // per-coordinate range (1 if degenerate)

  std::size_t L() const { return exponents.size(); }

  Eigen::VectorXd eval(const std::vector<double>& x) const {
    if (x.size() != k) throw std::invalid_argument("basis: covariate length");
    // powers[c][p] = u_c^p
    std::vector<std::vector<double>> powers(k);
    for (std::size_t c = 0; c < k; ++c) {
      double u = (x[c] - shift[c]) / scale[c];
      powers[c].resize(static_cast<std::size_t>(degree) + 1);
      powers[c][0] = 1.0;
      for (int p = 1; p <= degree; ++p) powers[c][p] = powers[c][p - 1] * u;
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(L()));
    for (std::size_t m = 0; m < L(); ++m) {
      double v = 1.0;
      for (std::size_t c = 0; c < k; ++c)
        v *= powers[c][static_cast<std::size_t>(exponents[m][c])];
      r(static_cast<Eigen::Index>(m)) = v;
    }
    return r;
  }

  Eigen::MatrixXd design(const std::vector<std::vector<double>>& xs) const {
    Eigen::MatrixXd R(static_cast<Eigen::Index>(xs.size()),
                      static_cast<Eigen::Index>(L()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      R.row(static_cast<Eigen::Index>(i)) = eval(xs[i]).transpose();
    return R;
  }
};

namespace detail {

inline void grlex_fill(std::size_t k, int total, std::vector<int>& current,
                       std::size_t pos, std::vector<std::vector<int>>& out) {
  if (pos + 1 == k) {
    current[pos] = total;
    out.push_back(current);
    return;
  }
  for (int e = total; e >= 0; --e) {
    current[pos] = e;
    grlex_fill(k, total - e, current, pos + 1, out);
  }
}

}  // namespace detail

inline std::vector<std::vector<int>> grlex_exponents(std::size_t k, int degree) {
  if (k == 0) throw std::invalid_argument("basis: need at least one covariate");
  if (degree < 0) throw std::invalid_argument("basis: negative degree");
  std::vector<std::vector<int>> out;
  std::vector<int> current(k, 0);
  for (int g = 0; g <= degree; ++g) detail::grlex_fill(k, g, current, 0, out);
  return out;
}

inline PowerBasis make_power_basis(const std::vector<std::vector<double>>& xs,
                                   int degree) {
  if (xs.empty()) throw std::invalid_argument("basis: empty sample");
  PowerBasis b;
  b.k = xs[0].size();
  b.degree = degree;
  b.exponents = grlex_exponents(b.k, degree);
  b.shift.assign(b.k, 0.0);
  b.scale.assign(b.k, 1.0);
  for (std::size_t c = 0; c < b.k; ++c) {
    double lo = xs[0][c], hi = xs[0][c];
    for (const auto& row : xs) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    b.shift[c] = lo;
    b.scale[c] = (hi > lo) ? (hi - lo) : 1.0;
  }
  return b;
}

inline int default_degree(std::size_t n) {
  if (n < 200) return 1;
  if (n < 400) return 2;
  return 3;
}

}  // namespace kmte
