#pragma once

#include <cstddef>
#include <span>

#include "pointroute/layers.hpp"

namespace pointroute {

// One reversible encoder layer:
//   Y1 = X1 + MHA(LN_a(X2))
//   Y2 = X2 + FF(LN_f(Y1))
struct RevLayerSlots {
  LayerNormSlots attn_norm;
  AttentionSlots attn;
  LayerNormSlots ff_norm;
  FeedForwardSlots ff;
};

template <typename T>
struct RevPair {
  Matrix<T> first;
  Matrix<T> second;
};

template <typename T>
struct RevBackwardResult {
  RevPair<T> inputs;       // reconstructed (X1, X2)
  RevPair<T> input_grads;  // (dL/dX1, dL/dX2)
};

// Instrumentation for the backward walk: the largest number of inter-layer
// activation tensors held at any point.
struct BackwardTrace {
  std::size_t peak_retained_activations = 0;
  std::size_t layers_visited = 0;
};

template <typename T>
Matrix<T> attention_branch(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                           const Matrix<T>& x, AttentionGeometry geometry);
template <typename T>
Matrix<T> feed_forward_branch(const BasicParamStore<T>& params,
                              const RevLayerSlots& layer, const Matrix<T>& x);

template <typename T>
RevPair<T> rev_block_forward(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                             const Matrix<T>& x1, const Matrix<T>& x2,
                             AttentionGeometry geometry);

//   X2 = Y2 - FF(LN_f(Y1))
//   X1 = Y1 - MHA(LN_a(X2))
template <typename T>
RevPair<T> rev_block_inverse(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                             const Matrix<T>& y1, const Matrix<T>& y2,
                             AttentionGeometry geometry);

// Reconstructs the layer inputs from its outputs, re-runs both branches
// locally and back-propagates through them. Parameter gradients are added
// to `grads`.
template <typename T>
RevBackwardResult<T> rev_block_backward(const BasicParamStore<T>& params,
                                        const RevLayerSlots& layer,
                                        const Matrix<T>& y1, const Matrix<T>& y2,
                                        const Matrix<T>& dy1, const Matrix<T>& dy2,
                                        AttentionGeometry geometry, Gradients& grads);

template <typename T>
RevPair<T> rev_stack_forward(const BasicParamStore<T>& params,
                             std::span<const RevLayerSlots> layers, Matrix<T> x1,
                             Matrix<T> x2, AttentionGeometry geometry);

template <typename T>
RevPair<T> rev_stack_inverse(const BasicParamStore<T>& params,
                             std::span<const RevLayerSlots> layers, Matrix<T> y1,
                             Matrix<T> y2, AttentionGeometry geometry);

// Walks the layers last to first holding only the current (Y1, Y2) pair.
// Throws NumericError naming the layer if a gradient turns non-finite.
template <typename T>
RevBackwardResult<T> rev_stack_backward(const BasicParamStore<T>& params,
                                        std::span<const RevLayerSlots> layers,
                                        Matrix<T> y1, Matrix<T> y2, Matrix<T> dy1,
                                        Matrix<T> dy2, AttentionGeometry geometry,
                                        Gradients& grads,
                                        BackwardTrace* trace = nullptr);

}  // namespace pointroute
