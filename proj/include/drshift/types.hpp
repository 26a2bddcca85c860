#pragma once

#include <Eigen/Core>

namespace drshift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Point clouds are stored one observation per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PointRef = Eigen::Ref<const Eigen::VectorXd>;

} // namespace drshift
