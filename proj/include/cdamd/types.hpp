#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace cdamd {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

// Row-major float matrix; matches the on-disk layout of motion payloads.
using RowMajorMatF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Binary visibility matrix (1 = attend, 0 = blocked).
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using FlagVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

}  // namespace cdamd
