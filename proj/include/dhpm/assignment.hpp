#pragma once

#include <Eigen/Core>

#include <optional>
#include <utility>
#include <vector>

namespace dhpm {

/// Rows are ground-truth lanes, columns are proposals; entries are lane L1 distances.
using CostMatrix = Eigen::MatrixXd;

struct PositiveAssignment {
  /// (ground-truth index, proposal index), sorted by ground-truth index.
  std::vector<std::pair<int, int>> pairs;
  double total_cost = 0.0;

  /// Ground truth assigned to `proposal`, if any.
  std::optional<int> gt_for(int proposal) const;
};

struct DenseMatch {
  std::vector<std::optional<int>> target;  // per proposal
  std::vector<bool> active;                // per proposal
  std::vector<std::vector<int>> clusters;  // per ground truth, ascending distance

  std::size_t active_count() const;
};

/// Minimum-cost one-to-one assignment of every row to a distinct column.
/// Requires rows <= cols and finite costs; throws std::invalid_argument otherwise.
PositiveAssignment hungarian_assign(const CostMatrix& costs);

/// Nearest-ground-truth matching for every proposal, keeping only the `cap`
/// closest members of each cluster active. Ties go to the lower index.
DenseMatch dense_match(const CostMatrix& costs, int cap);

/// max(1, floor(4k / 25)).
int default_cap(int k);

}  // namespace dhpm
