#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace calens {

/// Neuron-major dense matrices: row i holds everything about neuron i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

} // namespace calens
