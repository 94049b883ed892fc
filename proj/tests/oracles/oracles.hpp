#pragma once

// Independent reference computations used only by tests. None of these call
// into the library's solvers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec3 = Eigen::Vector3d;

// Minimum-cost perfect matching of equal unit masses by enumerating all
// permutations.
inline double assignment_cost(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  std::vector<int> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - b[perm[i]]).norm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Dense tableau simplex with Bland's rule: maximize c.x subject to A x <= b,
// x >= 0, b >= 0.
inline double dense_lp_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  T.topLeftCorner(m, n) = A;
  T.block(0, n, m, m).setIdentity();
  T.col(n + m).head(m) = b;
  T.row(m).head(n) = -c.transpose();
  std::vector<int> basis(m);
  std::iota(basis.begin(), basis.end(), n);
  for (int iter = 0; iter < 100000; ++iter) {
    int enter = -1;
    for (int j = 0; j < n + m; ++j)
      if (T(m, j) < -1e-12) {
        enter = j;
        break;
      }
    if (enter < 0) return T(m, n + m);
    int leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (T(i, enter) > 1e-12) {
        const double r = T(i, n + m) / T(i, enter);
        if (r < ratio - 1e-15 || (std::abs(r - ratio) <= 1e-15 && basis[i] < basis[leave])) {
          ratio = r;
          leave = i;
        }
      }
    if (leave < 0) return std::numeric_limits<double>::infinity();
    T.row(leave) /= T(leave, enter);
    for (int i = 0; i <= m; ++i)
      if (i != leave) T.row(i) -= T(i, enter) * T.row(leave);
    basis[leave] = enter;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// sup { sum_i m_i u_i : u_i - u_j <= |x_i - x_j| } with all O(n^2) constraints,
// u split as p - q.
inline double lipschitz_lp(const std::vector<Vec3>& x, const std::vector<double>& m) {
  const int n = static_cast<int>(x.size());
  const int rows = n * (n - 1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, 2 * n);
  Eigen::VectorXd b(rows);
  int r = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      A(r, i) = 1;
      A(r, n + i) = -1;
      A(r, j) = -1;
      A(r, n + j) = 1;
      b(r) = (x[i] - x[j]).norm();
      ++r;
    }
  Eigen::VectorXd c(2 * n);
  for (int i = 0; i < n; ++i) {
    c(i) = m[i];
    c(n + i) = -m[i];
  }
  return dense_lp_max(A, b, c);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  double lo = -40, hi = 40;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Composite Gauss-Legendre (5 nodes) on [a, b] with `panels` panels.
inline double integrate(const std::function<double(double)>& f, double a, double b, int panels = 200) {
  static const double xs[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  static const double ws[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                               0.2369268850561891};
  double s = 0.0;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double m = a + (p + 0.5) * h;
    for (int k = 0; k < 5; ++k) s += ws[k] * f(m + 0.5 * h * xs[k]) * 0.5 * h;
  }
  return s;
}

// Tensor Gauss-Legendre over the box [lo, hi]^2.
inline double integrate2(const std::function<double(double, double)>& f, double x0, double x1, double y0, double y1,
                         int panels = 100) {
  return integrate([&](double x) { return integrate([&](double y) { return f(x, y); }, y0, y1, panels); }, x0, x1,
                   panels);
}

}  // namespace oracle
