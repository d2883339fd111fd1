#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pointroute/policy.hpp"

namespace pointroute {

enum class DecodeMode {
  kGreedy,  // argmax, lowest index on ties
  kSample,  // categorical draw from a seeded per-(instance, start) stream
  kForced,  // replay given orders (teacher forcing)
};

// Independent stream seed for one (instance, start) pair.
std::uint64_t stream_seed(std::uint64_t root, std::uint64_t instance, std::uint64_t start);

// Record of one instance decoded from every start node at once. Row
// r = start * (n - 1) + step of the step matrices belongs to that start's
// step-th decision (step 0 picks the second node).
template <typename T>
struct DecodeTape {
  int n = 0;
  std::vector<int> orders;  // n x n, row s is the tour that starts at s
  Matrix<T> keys;           // node embeddings mapped through the bilinear form
  Matrix<T> queries;        // n(n-1) x d
  Matrix<T> probs;          // n(n-1) x n, exactly 0 on visited nodes
  Matrix<T> score_slope;    // d u / d score = C (1 - tanh^2), 0 on visited nodes
  std::vector<int> chosen;
  std::vector<double> step_log_probs;

  std::span<const int> order(int start) const {
    return {orders.data() + static_cast<std::size_t>(start) * n,
            static_cast<std::size_t>(n)};
  }
  double log_prob(int start) const;
};

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::uint64_t seed = 0;
  std::uint64_t instance_index = 0;         // feeds stream_seed
  const std::vector<std::vector<int>>* forced = nullptr;  // one order per start
};

// Decodes instance from all n starts. `nodes` and `graph` are this
// instance's rows of an Encoding; `bilinear` comes from pointer_bilinear.
template <typename T>
DecodeTape<T> decode(const Policy<T>& policy, const Instance& instance,
                     const Matrix<T>& nodes, const RowVector<T>& graph,
                     const Matrix<T>& bilinear, const DecodeOptions& options);

// Adds to dnodes / dgraph / dbilinear the gradient of
// sum_s weights[s] * log p(tour_s).
template <typename T>
void decode_backward(const DecodeTape<T>& tape, const Matrix<T>& nodes,
                     const Matrix<T>& bilinear, std::span<const double> weights,
                     Matrix<T>& dnodes, RowVector<T>& dgraph,
                     Matrix<double>& dbilinear);

// Encoder pass over a batch of equally sized instances followed by the
// all-starts decode of each.
template <typename T>
struct BatchForward {
  int graph_size = 0;
  Matrix<T> features;
  Encoding<T> encoding;
  Matrix<T> bilinear;
  std::vector<DecodeTape<T>> tapes;
};

struct BatchOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::uint64_t seed = 0;
  std::uint64_t first_instance_index = 0;
  // Per instance, one order per start (kForced only).
  const std::vector<std::vector<std::vector<int>>>* forced = nullptr;
};

template <typename T>
BatchForward<T> forward_batch(const Policy<T>& policy, std::span<const Instance> instances,
                              const BatchOptions& options);

// Gradient of sum_i sum_s weights[i][s] * log p(tour_is) into `grads`.
template <typename T>
void backward_batch(const Policy<T>& policy, const BatchForward<T>& forward,
                    const std::vector<std::vector<double>>& weights, Gradients& grads,
                    BackwardTrace* trace = nullptr);

}  // namespace pointroute
