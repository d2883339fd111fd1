#include "pointroute/baselines.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

std::vector<double> distance_matrix(const Instance& instance) {
  const std::size_t n = instance.size();
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = instance.cost(i, j);
  }
  return dist;
}

constexpr double kImprovementTolerance = 1e-10;

}  // namespace

Tour held_karp(const Instance& instance) {
  const std::size_t n = instance.size();
  if (n > kHeldKarpMaxNodes) {
    throw ParameterError("held_karp supports at most " +
                         std::to_string(kHeldKarpMaxNodes) + " nodes, got " +
                         std::to_string(n));
  }
  if (n <= 3) {
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    return Tour(instance, std::move(order));
  }
  const auto dist = distance_matrix(instance);
  // Subsets over nodes 1..n-1; bit (j-1) marks node j. cost[mask][j-1] is the
  // cheapest path 0 -> ... -> j visiting exactly `mask`.
  const std::size_t m = n - 1;
  const std::size_t subsets = std::size_t{1} << m;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(subsets * m, kInf);
  std::vector<std::int8_t> parent(subsets * m, -1);
  for (std::size_t j = 0; j < m; ++j) cost[(std::size_t{1} << j) * m + j] = dist[j + 1];

  for (std::size_t mask = 1; mask < subsets; ++mask) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const std::size_t prev_mask = mask ^ (std::size_t{1} << j);
      if (prev_mask == 0) continue;
      double best = kInf;
      std::int8_t best_k = -1;
      for (std::size_t k = 0; k < m; ++k) {
        if (!(prev_mask & (std::size_t{1} << k))) continue;
        const double c = cost[prev_mask * m + k] + dist[(k + 1) * n + (j + 1)];
        if (c < best) {
          best = c;
          best_k = static_cast<std::int8_t>(k);
        }
      }
      cost[mask * m + j] = best;
      parent[mask * m + j] = best_k;
    }
  }

  const std::size_t full = subsets - 1;
  double best = kInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double c = cost[full * m + j] + dist[(j + 1) * n];
    if (c < best) {
      best = c;
      last = j;
    }
  }
  std::vector<int> reversed;
  std::size_t mask = full;
  std::size_t j = last;
  while (true) {
    reversed.push_back(static_cast<int>(j + 1));
    const std::int8_t k = parent[mask * m + j];
    mask ^= std::size_t{1} << j;
    if (k < 0) break;
    j = static_cast<std::size_t>(k);
  }
  std::vector<int> order{0};
  order.insert(order.end(), reversed.rbegin(), reversed.rend());
  return Tour(instance, std::move(order));
}

Tour nearest_neighbor(const Instance& instance, int start) {
  const int n = static_cast<int>(instance.size());
  if (start < 0 || start >= n) {
    throw ParameterError("start node " + std::to_string(start) + " out of range");
  }
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  std::vector<int> order{start};
  visited[start] = 1;
  for (int step = 1; step < n; ++step) {
    const int last = order.back();
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (visited[j]) continue;
      const double d = instance.cost(last, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    visited[best] = 1;
    order.push_back(best);
  }
  return Tour(instance, std::move(order));
}

Tour two_opt(const Instance& instance, const Tour& tour, TwoOptConfig config) {
  if (config.max_passes < 1) throw ParameterError("two_opt needs max_passes >= 1");
  const std::size_t n = instance.size();
  validate_tour(instance, tour.order());
  std::vector<int> t = tour.order();
  if (n < 4) return Tour(instance, std::move(t));
  const auto dist = distance_matrix(instance);
  const auto d = [&](int a, int b) { return dist[static_cast<std::size_t>(a) * n + b]; };

  for (int pass = 0; pass < config.max_passes; ++pass) {
    double best_delta = -kImprovementTolerance;
    std::size_t best_i = 0;
    std::size_t best_j = 0;
    bool found = false;
    for (std::size_t i = 0; i + 2 < n && !(found && config.first_improvement); ++i) {
      const int a = t[i];
      const int b = t[i + 1];
      const double ab = d(a, b);
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;  // the two edges touch
        const int c = t[j];
        const int e = t[(j + 1) % n];
        const double delta = d(a, c) + d(b, e) - ab - d(c, e);
        if (delta < best_delta) {
          best_delta = delta;
          best_i = i;
          best_j = j;
          found = true;
          if (config.first_improvement) break;
        }
      }
    }
    if (!found) break;
    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(best_i + 1),
                 t.begin() + static_cast<std::ptrdiff_t>(best_j + 1));
  }
  return Tour(instance, std::move(t));
}

Tour nearest_neighbor_best(const Instance& instance) {
  Tour best = nearest_neighbor(instance, 0);
  for (int s = 1; s < static_cast<int>(instance.size()); ++s) {
    Tour candidate = nearest_neighbor(instance, s);
    if (candidate.length() < best.length()) best = std::move(candidate);
  }
  return best;
}

Tour nearest_neighbor_two_opt_best(const Instance& instance, TwoOptConfig config) {
  Tour best = two_opt(instance, nearest_neighbor(instance, 0), config);
  for (int s = 1; s < static_cast<int>(instance.size()); ++s) {
    Tour candidate = two_opt(instance, nearest_neighbor(instance, s), config);
    if (candidate.length() < best.length()) best = std::move(candidate);
  }
  return best;
}

}  // namespace pointroute
