#pragma once

// Full REINFORCE loss on frozen sampled trajectories, re-scored by teacher
// forcing so it is a deterministic function of the parameters. Central
// differences use a small step so perturbations stay clear of ReLU kinks.

#include <vector>

#include "pointroute/decoder.hpp"
#include "pointroute/gradcheck.hpp"
#include "pointroute/training.hpp"

namespace fixture {

struct FrozenReinforce {
  pointroute::ModelConfig config;
  std::vector<pointroute::Instance> instances;
  std::vector<std::vector<std::vector<int>>> orders;  // [instance][start]
  std::vector<std::vector<double>> weights;           // dL / dlog p
};

inline FrozenReinforce freeze(const pointroute::Policy<double>& policy,
                              std::vector<pointroute::Instance> instances,
                              std::uint64_t seed) {
  using namespace pointroute;
  FrozenReinforce f;
  f.config = policy.config();
  f.instances = std::move(instances);
  const auto fwd = forward_batch(policy, std::span<const Instance>(f.instances),
                                 BatchOptions{DecodeMode::kSample, seed, 0, nullptr});
  RolloutBatch batch;
  for (std::size_t i = 0; i < f.instances.size(); ++i) {
    batch.trajectories.push_back(trajectories_from_tape(fwd.tapes[i], f.instances[i]));
    std::vector<std::vector<int>> per_start;
    for (const auto& t : batch.trajectories.back()) per_start.push_back(t.order);
    f.orders.push_back(std::move(per_start));
  }
  f.weights = reinforce_terms(batch).weights;
  return f;
}

inline double loss(const FrozenReinforce& f, const pointroute::BasicParamStore<double>& params) {
  using namespace pointroute;
  const auto policy = Policy<double>::from_params(f.config, params);
  BatchOptions opts;
  opts.mode = DecodeMode::kForced;
  opts.forced = &f.orders;
  const auto fwd = forward_batch(policy, std::span<const Instance>(f.instances), opts);
  double total = 0.0;
  for (std::size_t i = 0; i < fwd.tapes.size(); ++i) {
    for (int s = 0; s < fwd.tapes[i].n; ++s) total += f.weights[i][s] * fwd.tapes[i].log_prob(s);
  }
  return total;
}

// Analytic gradient written into the returned store's gradient buffers.
inline pointroute::BasicParamStore<double> with_gradient(const FrozenReinforce& f,
                                                         const pointroute::Policy<double>& policy) {
  using namespace pointroute;
  BatchOptions opts;
  opts.mode = DecodeMode::kForced;
  opts.forced = &f.orders;
  const auto fwd = forward_batch(policy, std::span<const Instance>(f.instances), opts);
  auto params = policy.params();
  params.zero_grad();
  backward_batch(policy, fwd, f.weights, params.grads());
  return params;
}

inline pointroute::GradCheckResult check(const pointroute::Policy<double>& policy,
                                         const FrozenReinforce& f, std::size_t samples,
                                         std::uint64_t seed) {
  return pointroute::finite_difference_check(
      [&](const pointroute::BasicParamStore<double>& p) { return loss(f, p); },
      with_gradient(f, policy), samples, seed, 1e-5);
}

}  // namespace fixture
