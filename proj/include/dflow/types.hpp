#pragma once

#include <Eigen/Dense>

namespace dflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

} // namespace dflow
