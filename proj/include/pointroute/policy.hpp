#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pointroute/instance.hpp"
#include "pointroute/model_config.hpp"
#include "pointroute/param_store.hpp"
#include "pointroute/reversible.hpp"

namespace pointroute {

inline constexpr int kFeatureWidth = 24;  // 8 symmetries x (x, y, angle)

// Angular node feature; see AngleFeature.
double angle_feature(double x, double y, AngleFeature kind = AngleFeature::kAtan2);

// N x 24 input features: for each of the 8 square symmetries, in the fixed
// order of apply_symmetries, the triple (x', y', angle(x', y')).
// Throws ParameterError if a coordinate lies outside [0,1].
Matrix<double> featurize(const Instance& instance,
                         AngleFeature kind = AngleFeature::kAtan2);

struct PolicyLayout {
  std::size_t embed_weight = 0;  // 24 x d
  std::size_t embed_bias = 0;    // 1 x d
  std::vector<RevLayerSlots> layers;
  std::size_t pointer_query = 0;  // d x (H * d_k), H blocks of d_k columns
  std::size_t pointer_key = 0;    // d x (H * d_k)
};

// Parameters plus the slot layout the forward and backward passes use.
template <typename T>
class Policy {
 public:
  // All-zero parameters (layer-norm gains at 1).
  explicit Policy(ModelConfig config);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every linear map.
  static Policy random(ModelConfig config, std::uint64_t seed);

  // Adopts externally loaded parameters; throws CheckpointError (kShape) when
  // a tensor is missing or has the wrong shape for `config`.
  static Policy from_params(ModelConfig config, BasicParamStore<T> params);

  const ModelConfig& config() const noexcept { return config_; }
  const PolicyLayout& layout() const noexcept { return layout_; }
  BasicParamStore<T>& params() noexcept { return params_; }
  const BasicParamStore<T>& params() const noexcept { return params_; }

  AttentionGeometry geometry(int graph_size) const {
    return {config_.heads, graph_size};
  }

  void zero_pointer_projections();

  template <typename U>
  Policy<U> cast() const {
    return Policy<U>::from_params(config_, params_.template cast<U>());
  }

 private:
  Policy(ModelConfig config, BasicParamStore<T> params, PolicyLayout layout)
      : config_(config), params_(std::move(params)), layout_(std::move(layout)) {}

  ModelConfig config_;
  BasicParamStore<T> params_;
  PolicyLayout layout_;
};

using PolicyModel = Policy<float>;

// Per-node embeddings h_i (graphs*n x d) and graph embeddings h_g
// (graphs x d, the sum of each graph's node rows). The reversible stack's
// output pair is kept so the backward pass can start from it.
template <typename T>
struct Encoding {
  int graph_size = 0;
  Matrix<T> nodes;
  Matrix<T> graphs;
  RevPair<T> stack_output;
};

// Features for several equally sized graphs stacked row-wise.
template <typename T>
Encoding<T> encode(const Policy<T>& policy, const Matrix<T>& features, int graph_size);

template <typename T>
void encode_backward(const Policy<T>& policy, const Matrix<T>& features,
                     const Encoding<T>& encoding, const Matrix<T>& dnodes,
                     const Matrix<T>& dgraphs, Gradients& grads,
                     BackwardTrace* trace = nullptr);

// Number of graphs encoded so far in this process.
std::size_t encoder_invocations();

// Decoder state of one partial route.
template <typename T>
struct ContextState {
  RowVector<T> first;  // embedding of the route's first node
  RowVector<T> last;   // embedding of the most recently visited node
  RowVector<T> route;  // sum of embeddings of the visited nodes
  int visited = 0;
};

// q = (h_g + h_route) / n + h_last + h_first.
template <typename T>
RowVector<T> context_query(const RowVector<T>& graph, const ContextState<T>& state, int n);

// Next-node distribution of the multi-pointer head, evaluated head by head:
//   PN_j  = 1/H sum_h (q Wq_h) . (k_j Wk_h) / sqrt(d_k)
//   u_j   = clip * tanh(PN_j - cost(last, j))  for unvisited j, -inf otherwise
//   p     = softmax(u)
template <typename T>
std::vector<double> pointer_distribution(const Policy<T>& policy, const RowVector<T>& q,
                                         const Matrix<T>& nodes, int last,
                                         const Instance& instance,
                                         std::span<const char> visited, double clip);

// The H pointer heads collapse to one bilinear form q M k^T with
// M = Wq Wk^T / (H sqrt(d_k)); this returns M (d x d).
template <typename T>
Matrix<T> pointer_bilinear(const Policy<T>& policy);

// Back-propagates dL/dM into the pointer projections.
template <typename T>
void pointer_bilinear_backward(const Policy<T>& policy, const Matrix<double>& dbilinear,
                               Gradients& grads);

}  // namespace pointroute
