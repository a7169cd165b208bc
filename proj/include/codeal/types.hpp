#pragma once

#include <Eigen/Dense>

namespace codeal {

using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::MatrixXi;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace codeal
