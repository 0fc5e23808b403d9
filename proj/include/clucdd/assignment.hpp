#pragma once

// Maximum-weight perfect matching on a rectangular weight matrix
// (Kuhn-Munkres with row/column potentials, O(n^3)).

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace clucdd {

struct Assignment {
  std::vector<int> row_to_col;  // -1 for rows matched to a padding column
  double total = 0.0;
};

/// Rows and columns are padded with zero-weight dummies up to a square
/// problem, so every real row is matched to at most one real column.
inline Assignment max_weight_assignment(const Eigen::MatrixXd& weight) {
  using std::size_t;
  const auto rows = static_cast<size_t>(weight.rows());
  const auto cols = static_cast<size_t>(weight.cols());
  const size_t n = std::max(rows, cols);
  Assignment out;
  out.row_to_col.assign(rows, -1);
  if (n == 0) return out;

  const double top = std::max(rows > 0 && cols > 0 ? weight.maxCoeff() : 0.0, 0.0);
  auto cost = [&](size_t r, size_t c) {
    const double w = (r < rows && c < cols) ? weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) : 0.0;
    return top - w;
  };

  // 1-based rows/columns; column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<size_t> match(n + 1, 0), way(n + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    match[0] = i;
    size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const size_t i0 = match[j0];
      double delta = inf;
      size_t j1 = 0;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (size_t j = 1; j <= n; ++j) {
    const size_t r = match[j] - 1;
    const size_t c = j - 1;
    if (r < rows && c < cols) {
      out.row_to_col[r] = static_cast<int>(c);
      out.total += weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

}  // namespace clucdd
