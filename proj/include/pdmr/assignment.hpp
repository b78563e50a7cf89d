#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pdmr {

/// Minimum-cost assignment (Hungarian method). cost is rows x cols; if rows <= cols every row
/// gets a distinct column, otherwise every column gets a distinct row. Returns, per row, the
/// assigned column or -1.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

}  // namespace pdmr
