#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

namespace dyad {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Dense 64-bit tensor. Every tensor in the system is (rows x cols), row-major.
using Tensor = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;

/// Name-keyed tensors; std::map keeps iteration (and serialization) order deterministic.
using NamedTensors = std::map<std::string, Tensor>;

}  // namespace dyad
