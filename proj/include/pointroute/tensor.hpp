#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "pointroute/errors.hpp"

namespace pointroute {

// Dense row-major storage. Every tensor in the engine is at most 2-D: node
// activations are (rows x width), vectors are 1 x width.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Tensor = Matrix<float>;

template <typename T>
void require_shape(const Matrix<T>& m, Eigen::Index rows, Eigen::Index cols,
                   const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + " is " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// NaN/Inf sentinel after an op; compiled out of release builds.
template <typename Derived>
inline void debug_check_finite([[maybe_unused]] const Eigen::DenseBase<Derived>& m,
                               [[maybe_unused]] const char* where) {
#ifndef NDEBUG
  if (!m.allFinite()) throw NumericError(std::string("non-finite values after ") + where);
#endif
}

}  // namespace pointroute
