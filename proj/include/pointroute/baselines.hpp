#pragma once

#include <cstddef>

#include "pointroute/instance.hpp"

namespace pointroute {

inline constexpr std::size_t kHeldKarpMaxNodes = 16;

// Exact optimum by subset dynamic programming (n <= 16). The tour starts at
// node 0; ties go to the smallest predecessor index.
Tour held_karp(const Instance& instance);

// Greedy nearest unvisited node, ties to the lowest index.
Tour nearest_neighbor(const Instance& instance, int start);

struct TwoOptConfig {
  int max_passes = 1000;
  bool first_improvement = false;
};

// Segment reversals that strictly shorten the tour, until none is left or
// max_passes is reached.
Tour two_opt(const Instance& instance, const Tour& tour, TwoOptConfig config = {});

// Best nearest-neighbor tour over all start nodes.
Tour nearest_neighbor_best(const Instance& instance);

// Best over all start nodes of 2-opt applied to each nearest-neighbor tour.
Tour nearest_neighbor_two_opt_best(const Instance& instance, TwoOptConfig config = {});

}  // namespace pointroute
