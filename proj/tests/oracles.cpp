#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oracle {

Eigen jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  Eigen out;
  for (std::size_t idx : order) {
    out.values.push_back(a[idx][idx]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k][idx];
    out.vectors.push_back(col);
  }
  return out;
}

std::vector<std::vector<double>> covariance(std::span<const std::vector<double>> rows) {
  const std::size_t n = rows.size(), d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (auto& row : c)
    for (double& x : row) x /= static_cast<double>(n - 1);
  return c;
}

namespace {

/// Gaussian elimination with partial pivoting; false when singular.
bool solve(std::vector<std::vector<double>> m, std::vector<double> rhs, std::vector<double>& x) {
  const std::size_t n = rhs.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-12) return false;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
    x[i] = s / m[i][i];
  }
  return true;
}

double objective(const std::vector<std::vector<double>>& k, std::span<const int> y, const std::vector<double>& a) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < a.size(); ++j) quad += a[i] * a[j] * y[i] * y[j] * k[i][j];
  }
  return lin - 0.5 * quad;
}

}  // namespace

DualOptimum brute_force_dual(const std::vector<std::vector<double>>& kernel, std::span<const int> y, double C) {
  const std::size_t n = y.size();
  std::size_t faces = 1;
  for (std::size_t i = 0; i < n; ++i) faces *= 3;
  DualOptimum best;
  best.objective = -std::numeric_limits<double>::infinity();
  const double feas = 1e-12;
  for (std::size_t code = 0; code < faces; ++code) {
    // state 0: alpha = 0, 1: alpha = C, 2: free
    std::vector<int> state(n);
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
    }
    std::vector<std::size_t> free;
    std::vector<double> alpha(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (state[i] == 1) alpha[i] = C;
      if (state[i] == 2) free.push_back(i);
    }
    if (!free.empty()) {
      // For i free: sum_j y_i y_j K_ij alpha_j + y_i b = 1 ; sum_j y_j alpha_j = 0
      const std::size_t m = free.size();
      std::vector<std::vector<double>> a(m + 1, std::vector<double>(m + 1, 0.0));
      std::vector<double> rhs(m + 1, 0.0);
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = free[r];
        double fixed = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          if (state[j] == 1) fixed += y[i] * y[j] * kernel[i][j] * C;
        for (std::size_t s = 0; s < m; ++s) a[r][s] = y[i] * y[free[s]] * kernel[i][free[s]];
        a[r][m] = y[i];
        rhs[r] = 1.0 - fixed;
        a[m][r] = y[i];
      }
      double fixed_sum = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (state[j] == 1) fixed_sum += y[j] * C;
      rhs[m] = -fixed_sum;
      std::vector<double> sol;
      if (!solve(a, rhs, sol)) continue;
      bool ok = true;
      for (std::size_t r = 0; r < m; ++r) {
        if (sol[r] < -feas || sol[r] > C + feas) ok = false;
        alpha[free[r]] = std::clamp(sol[r], 0.0, C);
      }
      if (!ok) continue;
    }
    double eq = 0.0;
    for (std::size_t i = 0; i < n; ++i) eq += y[i] * alpha[i];
    if (std::abs(eq) > 1e-9) continue;
    const double obj = objective(kernel, y, alpha);
    if (obj > best.objective) {
      best.objective = obj;
      best.alpha = alpha;
    }
  }
  if (best.alpha.empty()) throw std::runtime_error("no feasible face");
  return best;
}

long double binomial_cdf(int k, int n, long double p) {
  if (k < 0) return 0.0L;
  if (k >= n) return 1.0L;
  long double sum = 0.0L;
  long double choose = 1.0L;  // C(n, i)
  for (int i = 0; i <= k; ++i) {
    if (i > 0) choose = choose * static_cast<long double>(n - i + 1) / static_cast<long double>(i);
    sum += choose * std::pow(p, static_cast<long double>(i)) * std::pow(1.0L - p, static_cast<long double>(n - i));
  }
  return sum;
}

Bounds clopper_pearson(int k, int n, double alpha) {
  Bounds b;
  const long double half = alpha / 2.0L;
  if (k > 0) {
    // P[X >= k] = 1 - cdf(k - 1) increases with p.
    long double lo = 0.0L, hi = 1.0L;
    for (int i = 0; i < 200; ++i) {
      const long double mid = (lo + hi) / 2.0L;
      if (1.0L - binomial_cdf(k - 1, n, mid) > half) hi = mid;
      else lo = mid;
    }
    b.lower = static_cast<double>((lo + hi) / 2.0L);
  }
  if (k < n) {
    // cdf(k) decreases with p.
    long double lo = 0.0L, hi = 1.0L;
    for (int i = 0; i < 200; ++i) {
      const long double mid = (lo + hi) / 2.0L;
      if (binomial_cdf(k, n, mid) > half) lo = mid;
      else hi = mid;
    }
    b.upper = static_cast<double>((lo + hi) / 2.0L);
  }
  return b;
}

double pair_count_auc(std::span<const double> scores, std::span<const int> truth) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracle
