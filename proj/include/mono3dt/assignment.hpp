#pragma once

// Kuhn-Munkres (Hungarian) assignment with row/column potentials, O(n^2 m).

#include <Eigen/Dense>

#include <limits>
#include <utility>
#include <vector>

#include "mono3dt/errors.hpp"

namespace mono3dt {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total = 0.0;  // summed in row order
};

namespace detail {

/// Minimum-cost assignment of every row of an n x m cost matrix (n <= m). Returns col per row.
inline std::vector<int> hungarian_rows(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
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
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace detail

/// Maximum-total-weight matching. Weights must be finite and non-negative; entries where
/// `allowed` is false never appear in the result.
inline Assignment max_weight_assignment(const Eigen::MatrixXd& weights, const BoolMatrix* allowed = nullptr) {
  if (!weights.allFinite()) throw InvalidArgument("assignment weights must be finite");
  if (allowed && (allowed->rows() != weights.rows() || allowed->cols() != weights.cols()))
    throw InvalidArgument("assignment mask shape differs from weights");
  const int rows = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  Assignment out;

  auto is_allowed = [&](int r, int c) { return !allowed || (*allowed)(r, c); };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (is_allowed(r, c) && weights(r, c) < 0.0) throw InvalidArgument("assignment weights must be non-negative");

  std::vector<int> col_of_row(rows, -1);
  if (rows > 0 && cols > 0) {
    // Forbidden entries carry zero weight: with non-negative weights, using one is equivalent to
    // leaving both endpoints unmatched.
    Eigen::MatrixXd cost(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) cost(r, c) = is_allowed(r, c) ? -weights(r, c) : 0.0;
    if (rows <= cols) {
      col_of_row = detail::hungarian_rows(cost);
    } else {
      const std::vector<int> row_of_col = detail::hungarian_rows(cost.transpose());
      for (int c = 0; c < cols; ++c)
        if (row_of_col[c] >= 0) col_of_row[row_of_col[c]] = c;
    }
  }

  std::vector<char> col_used(cols, 0);
  for (int r = 0; r < rows; ++r) {
    const int c = col_of_row[r];
    if (c >= 0 && is_allowed(r, c)) {
      out.pairs.emplace_back(r, c);
      out.total += weights(r, c);
      col_used[c] = 1;
    } else {
      out.unmatched_rows.push_back(r);
    }
  }
  for (int c = 0; c < cols; ++c)
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  return out;
}

}  // namespace mono3dt
