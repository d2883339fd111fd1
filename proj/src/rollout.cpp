#include "pointroute/rollout.hpp"

#include <numeric>

#include "pointroute/errors.hpp"
#include "pointroute/parallel.hpp"

namespace pointroute {

template <typename T>
std::vector<Trajectory> trajectories_from_tape(const DecodeTape<T>& tape,
                                               const Instance& instance) {
  std::vector<Trajectory> out(static_cast<std::size_t>(tape.n));
  for (int s = 0; s < tape.n; ++s) {
    auto& t = out[static_cast<std::size_t>(s)];
    const auto order = tape.order(s);
    t.order.assign(order.begin(), order.end());
    const auto first = tape.step_log_probs.begin() + static_cast<std::ptrdiff_t>(s) * (tape.n - 1);
    t.step_log_probs.assign(first, first + (tape.n - 1));
    t.reward = -tour_length(instance, t.order);
  }
  return out;
}

template std::vector<Trajectory> trajectories_from_tape(const DecodeTape<float>&,
                                                        const Instance&);
template std::vector<Trajectory> trajectories_from_tape(const DecodeTape<double>&,
                                                        const Instance&);

std::vector<Trajectory> multi_start_rollout(const PolicyModel& model,
                                            const Instance& instance, DecodeMode mode,
                                            std::optional<std::uint64_t> seed) {
  const auto batch = rollout_batch(model, std::span<const Instance>(&instance, 1), mode,
                                   seed, 1);
  return batch.trajectories.front();
}

RolloutBatch rollout_batch(const PolicyModel& model, std::span<const Instance> instances,
                           DecodeMode mode, std::optional<std::uint64_t> seed,
                           std::size_t workers) {
  if (mode == DecodeMode::kForced) {
    throw ParameterError("rollouts decode greedily or by sampling; use rescore for "
                         "given orders");
  }
  if (mode == DecodeMode::kSample && !seed) {
    throw ParameterError("sample-mode rollout requires a seed");
  }
  RolloutBatch batch;
  batch.mode = mode;
  batch.seed = seed.value_or(0);
  batch.trajectories.resize(instances.size());
  parallel_for(instances.size(), workers,
               [&](std::size_t begin, std::size_t end, std::size_t) {
                 BatchOptions opts;
                 opts.mode = mode;
                 opts.seed = batch.seed;
                 opts.first_instance_index = begin;
                 const auto chunk = instances.subspan(begin, end - begin);
                 const auto fwd = forward_batch(model, chunk, opts);
                 for (std::size_t i = 0; i < chunk.size(); ++i) {
                   batch.trajectories[begin + i] =
                       trajectories_from_tape(fwd.tapes[i], chunk[i]);
                 }
               });
  return batch;
}

std::size_t best_index(std::span<const double> lengths) {
  if (lengths.empty()) throw ParameterError("best_of needs at least one trajectory");
  std::size_t best = 0;
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] < lengths[best]) best = i;
  }
  return best;
}

Tour best_of(const Instance& instance, std::span<const Trajectory> trajectories) {
  std::vector<double> lengths;
  lengths.reserve(trajectories.size());
  for (const auto& t : trajectories) lengths.push_back(t.length());
  return Tour(instance, trajectories[best_index(lengths)].order);
}

double trajectory_log_prob(const Trajectory& trajectory) {
  return std::accumulate(trajectory.step_log_probs.begin(),
                         trajectory.step_log_probs.end(), 0.0);
}

std::vector<double> rescore(const PolicyModel& model, const Instance& instance,
                            const std::vector<std::vector<int>>& orders) {
  const std::vector<std::vector<std::vector<int>>> forced{orders};
  BatchOptions opts;
  opts.mode = DecodeMode::kForced;
  opts.forced = &forced;
  const auto fwd = forward_batch(model, std::span<const Instance>(&instance, 1), opts);
  std::vector<double> out;
  for (int s = 0; s < fwd.tapes.front().n; ++s) out.push_back(fwd.tapes.front().log_prob(s));
  return out;
}

}  // namespace pointroute
