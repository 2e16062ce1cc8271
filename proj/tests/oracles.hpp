#pragma once

// Slow reference computations used only by tests. Nothing here calls into
// the library's numerical routines; inputs and outputs are plain vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense transpose(const Dense& a) {
  Dense t = zeros(a.empty() ? 0 : a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Dense multiply(const Dense& a, const Dense& b) {
  Dense c = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[k].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

/// ||X^T X - Y^T Y||_F^2 by explicit quadruple loop; X is n x T, Y is m x T.
inline double global_objective(const Dense& X, const Dense& Y) {
  const std::size_t T = X[0].size();
  double total = 0.0;
  for (std::size_t s = 0; s < T; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      double gx = 0.0, gy = 0.0;
      for (const auto& row : X) gx += row[s] * row[t];
      for (const auto& row : Y) gy += row[s] * row[t];
      total += (gx - gy) * (gx - gy);
    }
  }
  return total;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns).
inline std::pair<std::vector<double>, Dense> jacobi_eigen(Dense a) {
  const std::size_t n = a.size();
  Dense v = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
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
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
  return {values, v};
}

/// Unbiased sample covariance of row-vector samples.
inline Dense covariance(const Dense& samples) {
  const std::size_t n = samples[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < n; ++j) mean[j] += s[j];
  for (auto& m : mean) m /= static_cast<double>(samples.size());
  Dense cov = zeros(n, n);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
  for (auto& row : cov)
    for (auto& x : row) x /= static_cast<double>(samples.size() - 1);
  return cov;
}

/// U f(D) U^T for a symmetric matrix with eigenpairs from jacobi_eigen.
template <typename F>
Dense spectral_map(const Dense& sym, F f) {
  const auto [values, vectors] = jacobi_eigen(sym);
  const std::size_t n = values.size();
  Dense out = zeros(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = f(values[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i][j] += w * vectors[i][k] * vectors[j][k];
  }
  return out;
}

/// Quadrant averages of a depth x h x w grid, split at floor(side / 2).
inline std::vector<double> quadrant_pool(const std::vector<Dense>& planes) {
  const std::size_t h = planes[0].size(), w = planes[0][0].size();
  const std::size_t hs = h / 2, ws = w / 2;
  std::vector<double> out;
  const std::pair<std::size_t, std::size_t> rows[2] = {{0, hs}, {hs, h}};
  const std::pair<std::size_t, std::size_t> cols[2] = {{0, ws}, {ws, w}};
  for (auto [r0, r1] : rows) {
    for (auto [c0, c1] : cols) {
      for (const auto& plane : planes) {
        double sum = 0.0;
        int cells = 0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) {
            sum += plane[r][c];
            ++cells;
          }
        out.push_back(sum / cells);
      }
    }
  }
  return out;
}

/// Accuracy of assigning each test point to the class with the nearest
/// training mean.
inline double nearest_mean_accuracy(const Dense& train, const std::vector<int>& train_labels,
                                    const Dense& test, const std::vector<int>& test_labels,
                                    int classes) {
  const std::size_t d = train[0].size();
  Dense means = zeros(static_cast<std::size_t>(classes), d);
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto k = static_cast<std::size_t>(train_labels[i]);
    ++counts[k];
    for (std::size_t j = 0; j < d; ++j) means[k][j] += train[i][j];
  }
  for (std::size_t k = 0; k < means.size(); ++k)
    for (auto& x : means[k]) x /= counts[k];
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    int best = 0;
    double best_dist = INFINITY;
    for (int k = 0; k < classes; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = test[i][j] - means[static_cast<std::size_t>(k)][j];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    correct += best == test_labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace oracle
