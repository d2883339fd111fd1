#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "pointroute/param_store.hpp"

namespace pointroute {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Worst coordinate.
  std::size_t slot = 0;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradient stored in `params.grads()` with central
// differences (f(p+eps) - f(p-eps)) / (2 eps) on `samples` coordinates drawn
// without replacement. Relative error uses max(|analytic|, |numeric|, 1e-8)
// as denominator.
GradCheckResult finite_difference_check(
    const std::function<double(const BasicParamStore<double>&)>& f,
    BasicParamStore<double> params, std::size_t samples, std::uint64_t seed,
    double eps = 1e-3);

}  // namespace pointroute
