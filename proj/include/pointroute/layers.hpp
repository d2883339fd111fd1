#pragma once

#include <cstddef>

#include "pointroute/param_store.hpp"
#include "pointroute/tensor.hpp"

namespace pointroute {

struct LayerNormSlots {
  std::size_t gain = 0;
  std::size_t bias = 0;
};

// Query/key/value projections carry no bias; the output projection does.
struct AttentionSlots {
  std::size_t wq = 0;
  std::size_t wk = 0;
  std::size_t wv = 0;
  std::size_t wo = 0;
  std::size_t bo = 0;
};

struct FeedForwardSlots {
  std::size_t w1 = 0;
  std::size_t b1 = 0;
  std::size_t w2 = 0;
  std::size_t b2 = 0;
};

// Rows of an activation matrix are grouped into independent graphs of
// `graph_size` nodes; attention never crosses a graph boundary.
struct AttentionGeometry {
  int heads = 8;
  int graph_size = 0;
};

inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename T>
struct LayerNormCache {
  Matrix<T> normalized;  // (x - mean) * rstd
  Matrix<T> rstd;        // rows x 1
};

template <typename T>
struct AttentionCache {
  Matrix<T> input;
  Matrix<T> q, k, v;
  // Softmax weights, one g x g block per (graph, head), stacked row-wise in
  // (graph, head) order.
  Matrix<T> weights;
  Matrix<T> context;  // concatenated heads before the output projection
};

template <typename T>
struct FeedForwardCache {
  Matrix<T> input;
  Matrix<T> hidden;  // post-ReLU
};

template <typename T>
Matrix<T> layer_norm_forward(const BasicParamStore<T>& params, LayerNormSlots slots,
                             const Matrix<T>& x, LayerNormCache<T>* cache);

template <typename T>
Matrix<T> layer_norm_backward(const BasicParamStore<T>& params, LayerNormSlots slots,
                              const LayerNormCache<T>& cache, const Matrix<T>& dy,
                              Gradients& grads);

// Multi-head self-attention over the rows of each graph, scaled by
// 1/sqrt(d/heads), no positional encoding.
template <typename T>
Matrix<T> mha_forward(const BasicParamStore<T>& params, AttentionSlots slots,
                      const Matrix<T>& x, AttentionGeometry geometry,
                      AttentionCache<T>* cache = nullptr);

template <typename T>
Matrix<T> mha_backward(const BasicParamStore<T>& params, AttentionSlots slots,
                       const AttentionCache<T>& cache, AttentionGeometry geometry,
                       const Matrix<T>& dout, Gradients& grads);

// Two linear maps with a ReLU between them.
template <typename T>
Matrix<T> feed_forward(const BasicParamStore<T>& params, FeedForwardSlots slots,
                       const Matrix<T>& x, FeedForwardCache<T>* cache = nullptr);

template <typename T>
Matrix<T> feed_forward_backward(const BasicParamStore<T>& params,
                                FeedForwardSlots slots,
                                const FeedForwardCache<T>& cache,
                                const Matrix<T>& dout, Gradients& grads);

}  // namespace pointroute
