#include "dhpm/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dhpm {

std::optional<int> PositiveAssignment::gt_for(int proposal) const {
  for (const auto& [g, p] : pairs)
    if (p == proposal) return g;
  return std::nullopt;
}

std::size_t DenseMatch::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

PositiveAssignment hungarian_assign(const CostMatrix& costs) {
  const int rows = static_cast<int>(costs.rows());
  const int cols = static_cast<int>(costs.cols());
  if (rows > cols) throw std::invalid_argument("hungarian_assign: more ground truths than proposals");
  if (!costs.allFinite()) throw std::invalid_argument("hungarian_assign: non-finite cost");

  PositiveAssignment out;
  if (rows == 0) return out;

  // Shortest augmenting path with row/column potentials; 1-based with a
  // virtual column 0.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> col_owner(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    col_owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, kInf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_owner[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = costs(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[col_owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[j0] != 0);
    do {
      const int j1 = way[j0];
      col_owner[j0] = col_owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.pairs.resize(rows);
  for (int j = 1; j <= cols; ++j)
    if (col_owner[j] != 0) out.pairs[col_owner[j] - 1] = {col_owner[j] - 1, j - 1};
  for (const auto& [g, p] : out.pairs) out.total_cost += costs(g, p);
  return out;
}

DenseMatch dense_match(const CostMatrix& costs, int cap) {
  if (cap < 1) throw std::invalid_argument("dense_match: cap must be >= 1");
  const int rows = static_cast<int>(costs.rows());
  const int cols = static_cast<int>(costs.cols());

  DenseMatch out;
  out.target.assign(cols, std::nullopt);
  out.active.assign(cols, false);
  out.clusters.assign(rows, {});
  if (rows == 0) return out;

  for (int k = 0; k < cols; ++k) {
    int best = 0;
    for (int i = 1; i < rows; ++i)
      if (costs(i, k) < costs(best, k)) best = i;
    out.target[k] = best;
    out.clusters[best].push_back(k);
  }
  for (int i = 0; i < rows; ++i) {
    auto& members = out.clusters[i];
    std::stable_sort(members.begin(), members.end(),
                     [&](int a, int b) { return costs(i, a) < costs(i, b); });
    const auto keep = std::min<std::size_t>(members.size(), static_cast<std::size_t>(cap));
    for (std::size_t r = 0; r < keep; ++r) out.active[members[r]] = true;
  }
  return out;
}

int default_cap(int k) { return std::max(1, (4 * k) / 25); }

}  // namespace dhpm
