#pragma once

#include <Eigen/Dense>

namespace pgsr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace pgsr
