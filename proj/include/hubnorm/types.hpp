#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace hubnorm {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = RowMajorMatrix<double>;
using Vector = Eigen::VectorXd;
using IndexMatrix = RowMajorMatrix<std::int32_t>;
using Index = Eigen::Index;

}  // namespace hubnorm
