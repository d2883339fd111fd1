#include "pointroute/reversible.hpp"

#include <algorithm>
#include <string>

namespace pointroute {
namespace {

template <typename T>
void require_pair(const Matrix<T>& a, const Matrix<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": halves are " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

template <typename T>
std::size_t live_activations(const RevPair<T>& pair) {
  return static_cast<std::size_t>(pair.first.size() > 0) +
         static_cast<std::size_t>(pair.second.size() > 0);
}

}  // namespace

template <typename T>
Matrix<T> attention_branch(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                           const Matrix<T>& x, AttentionGeometry geometry) {
  return mha_forward(params, layer.attn,
                     layer_norm_forward<T>(params, layer.attn_norm, x, nullptr),
                     geometry);
}

template <typename T>
Matrix<T> feed_forward_branch(const BasicParamStore<T>& params,
                              const RevLayerSlots& layer, const Matrix<T>& x) {
  return feed_forward(params, layer.ff,
                      layer_norm_forward<T>(params, layer.ff_norm, x, nullptr));
}

template <typename T>
RevPair<T> rev_block_forward(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                             const Matrix<T>& x1, const Matrix<T>& x2,
                             AttentionGeometry geometry) {
  require_pair(x1, x2, "reversible block input");
  RevPair<T> out;
  out.first = x1 + attention_branch(params, layer, x2, geometry);
  out.second = x2 + feed_forward_branch(params, layer, out.first);
  return out;
}

template <typename T>
RevPair<T> rev_block_inverse(const BasicParamStore<T>& params, const RevLayerSlots& layer,
                             const Matrix<T>& y1, const Matrix<T>& y2,
                             AttentionGeometry geometry) {
  require_pair(y1, y2, "reversible block output");
  RevPair<T> in;
  in.second = y2 - feed_forward_branch(params, layer, y1);
  in.first = y1 - attention_branch(params, layer, in.second, geometry);
  return in;
}

template <typename T>
RevBackwardResult<T> rev_block_backward(const BasicParamStore<T>& params,
                                        const RevLayerSlots& layer,
                                        const Matrix<T>& y1, const Matrix<T>& y2,
                                        const Matrix<T>& dy1, const Matrix<T>& dy2,
                                        AttentionGeometry geometry, Gradients& grads) {
  require_pair(y1, y2, "reversible block output");
  require_pair(y1, dy1, "reversible block gradient");
  require_pair(y2, dy2, "reversible block gradient");
  RevBackwardResult<T> r;

  // Feed-forward branch G(Y1): recompute with caches, then X2 = Y2 - G(Y1).
  {
    LayerNormCache<T> norm;
    FeedForwardCache<T> ff;
    const Matrix<T> z = layer_norm_forward(params, layer.ff_norm, y1, &norm);
    r.inputs.second = y2 - feed_forward(params, layer.ff, z, &ff);
    const Matrix<T> dz = feed_forward_backward(params, layer.ff, ff, dy2, grads);
    r.input_grads.first = dy1 + layer_norm_backward(params, layer.ff_norm, norm, dz, grads);
  }
  r.input_grads.second = dy2;

  // Attention branch F(X2): X1 = Y1 - F(X2).
  {
    LayerNormCache<T> norm;
    AttentionCache<T> attn;
    const Matrix<T> z = layer_norm_forward(params, layer.attn_norm, r.inputs.second, &norm);
    r.inputs.first = y1 - mha_forward(params, layer.attn, z, geometry, &attn);
    const Matrix<T> dz =
        mha_backward(params, layer.attn, attn, geometry, r.input_grads.first, grads);
    r.input_grads.second +=
        layer_norm_backward(params, layer.attn_norm, norm, dz, grads);
  }
  return r;
}

template <typename T>
RevPair<T> rev_stack_forward(const BasicParamStore<T>& params,
                             std::span<const RevLayerSlots> layers, Matrix<T> x1,
                             Matrix<T> x2, AttentionGeometry geometry) {
  RevPair<T> state{std::move(x1), std::move(x2)};
  for (const auto& layer : layers) {
    state = rev_block_forward(params, layer, state.first, state.second, geometry);
  }
  return state;
}

template <typename T>
RevPair<T> rev_stack_inverse(const BasicParamStore<T>& params,
                             std::span<const RevLayerSlots> layers, Matrix<T> y1,
                             Matrix<T> y2, AttentionGeometry geometry) {
  RevPair<T> state{std::move(y1), std::move(y2)};
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    state = rev_block_inverse(params, *it, state.first, state.second, geometry);
  }
  return state;
}

template <typename T>
RevBackwardResult<T> rev_stack_backward(const BasicParamStore<T>& params,
                                        std::span<const RevLayerSlots> layers,
                                        Matrix<T> y1, Matrix<T> y2, Matrix<T> dy1,
                                        Matrix<T> dy2, AttentionGeometry geometry,
                                        Gradients& grads, BackwardTrace* trace) {
  RevBackwardResult<T> state{{std::move(y1), std::move(y2)},
                             {std::move(dy1), std::move(dy2)}};
  for (std::size_t i = layers.size(); i-- > 0;) {
    auto step = rev_block_backward(params, layers[i], state.inputs.first,
                                   state.inputs.second, state.input_grads.first,
                                   state.input_grads.second, geometry, grads);
    if (!step.input_grads.first.allFinite() || !step.input_grads.second.allFinite()) {
      throw NumericError("non-finite gradient in reversible layer " +
                         std::to_string(i));
    }
    if (trace) {
      // Activation pairs alive at the hand-over: the layer's outputs and its
      // reconstructed inputs.
      trace->peak_retained_activations = std::max(
          trace->peak_retained_activations,
          live_activations(state.inputs) + live_activations(step.inputs));
      ++trace->layers_visited;
    }
    state = std::move(step);
  }
  if (trace) {
    trace->peak_retained_activations =
        std::max(trace->peak_retained_activations, live_activations(state.inputs));
  }
  return state;
}

#define POINTROUTE_INSTANTIATE_REV(T)                                              \
  template Matrix<T> attention_branch(const BasicParamStore<T>&,                   \
                                      const RevLayerSlots&, const Matrix<T>&,      \
                                      AttentionGeometry);                          \
  template Matrix<T> feed_forward_branch(const BasicParamStore<T>&,                \
                                         const RevLayerSlots&, const Matrix<T>&);  \
  template RevPair<T> rev_block_forward(const BasicParamStore<T>&,                 \
                                        const RevLayerSlots&, const Matrix<T>&,    \
                                        const Matrix<T>&, AttentionGeometry);      \
  template RevPair<T> rev_block_inverse(const BasicParamStore<T>&,                 \
                                        const RevLayerSlots&, const Matrix<T>&,    \
                                        const Matrix<T>&, AttentionGeometry);      \
  template RevBackwardResult<T> rev_block_backward(                                \
      const BasicParamStore<T>&, const RevLayerSlots&, const Matrix<T>&,           \
      const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, AttentionGeometry,     \
      Gradients&);                                                                 \
  template RevPair<T> rev_stack_forward(const BasicParamStore<T>&,                 \
                                        std::span<const RevLayerSlots>, Matrix<T>, \
                                        Matrix<T>, AttentionGeometry);             \
  template RevPair<T> rev_stack_inverse(const BasicParamStore<T>&,                 \
                                        std::span<const RevLayerSlots>, Matrix<T>, \
                                        Matrix<T>, AttentionGeometry);             \
  template RevBackwardResult<T> rev_stack_backward(                                \
      const BasicParamStore<T>&, std::span<const RevLayerSlots>, Matrix<T>,        \
      Matrix<T>, Matrix<T>, Matrix<T>, AttentionGeometry, Gradients&,              \
      BackwardTrace*);

POINTROUTE_INSTANTIATE_REV(float)
POINTROUTE_INSTANTIATE_REV(double)

#undef POINTROUTE_INSTANTIATE_REV

}  // namespace pointroute
