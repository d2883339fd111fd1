#include "pointroute/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace pointroute {

GradCheckResult finite_difference_check(
    const std::function<double(const BasicParamStore<double>&)>& f,
    BasicParamStore<double> params, std::size_t samples, std::uint64_t seed,
    double eps) {
  std::vector<std::size_t> offsets(params.size() + 1, 0);
  for (std::size_t s = 0; s < params.size(); ++s) {
    offsets[s + 1] = offsets[s] + static_cast<std::size_t>(params.value(s).size());
  }
  const std::size_t total = offsets.back();

  std::vector<std::size_t> picks(total);
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(picks.begin(), picks.end(), rng);
  picks.resize(std::min(samples, total));

  GradCheckResult result;
  for (const std::size_t flat : picks) {
    const auto slot = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const auto index = static_cast<Eigen::Index>(flat - offsets[slot]);
    double& value = params.value(slot).data()[index];
    const double saved = value;
    value = saved + eps;
    const double up = f(params);
    value = saved - eps;
    const double down = f(params);
    value = saved;

    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = params.grad(slot).data()[index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic - numeric) / denom;
    ++result.coordinates;
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.slot = slot;
      result.index = index;
      result.analytic = analytic;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace pointroute
