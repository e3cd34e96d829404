#pragma once

#include <Eigen/Dense>

namespace repsim {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// On-disk and in-memory storage type of activations.
using MatrixF = RowMajorMatrix<float>;

using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

}  // namespace repsim
