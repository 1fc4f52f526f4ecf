#pragma once

#include <Eigen/Core>

#include <vector>

namespace latefuse {

/// Minimum-cost one-to-one assignment for a rectangular cost matrix.
/// Returns, for every row, the assigned column or -1 when rows outnumber
/// columns. Entries must be finite.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace latefuse
