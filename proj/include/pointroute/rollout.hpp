#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pointroute/decoder.hpp"
#include "pointroute/instance.hpp"
#include "pointroute/policy.hpp"

namespace pointroute {

struct Trajectory {
  std::vector<int> order;
  std::vector<double> step_log_probs;  // n - 1 entries; the start is forced
  double reward = 0.0;                 // -tour_length

  double length() const noexcept { return -reward; }
};

// Unpacks a decode tape into one trajectory per start node.
template <typename T>
std::vector<Trajectory> trajectories_from_tape(const DecodeTape<T>& tape,
                                               const Instance& instance);

// One trajectory per start node, encoder run once. `instance` must already
// be in the unit square. Sample mode requires a seed.
std::vector<Trajectory> multi_start_rollout(const PolicyModel& model,
                                            const Instance& instance, DecodeMode mode,
                                            std::optional<std::uint64_t> seed = std::nullopt);

struct RolloutBatch {
  std::vector<std::vector<Trajectory>> trajectories;  // [instance][start]
  DecodeMode mode = DecodeMode::kGreedy;
  std::uint64_t seed = 0;
};

// Rollouts over equally sized instances; workers split the instances and
// results are gathered by (instance, start).
RolloutBatch rollout_batch(const PolicyModel& model, std::span<const Instance> instances,
                           DecodeMode mode, std::optional<std::uint64_t> seed,
                           std::size_t workers = 1);

// Lowest length wins; ties go to the lowest index.
std::size_t best_index(std::span<const double> lengths);
Tour best_of(const Instance& instance, std::span<const Trajectory> trajectories);

double trajectory_log_prob(const Trajectory& trajectory);

// Teacher-forced log-probabilities of given orders (one per start node).
std::vector<double> rescore(const PolicyModel& model, const Instance& instance,
                            const std::vector<std::vector<int>>& orders);

}  // namespace pointroute
