#pragma once

#include <Eigen/Dense>

namespace tabsynth {

// Batch-major storage: one record per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace tabsynth
