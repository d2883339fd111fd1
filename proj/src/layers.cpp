#include "pointroute/layers.hpp"

#include <cmath>
#include <string>

namespace pointroute {
namespace {

void check_geometry(Eigen::Index rows, Eigen::Index width, AttentionGeometry g) {
  if (g.heads <= 0 || width % g.heads != 0) {
    throw DimensionError("attention width " + std::to_string(width) +
                         " not divisible by " + std::to_string(g.heads) +
                         " heads");
  }
  if (g.graph_size <= 0 || rows % g.graph_size != 0) {
    throw DimensionError("attention input has " + std::to_string(rows) +
                         " rows, not a multiple of graph size " +
                         std::to_string(g.graph_size));
  }
}

template <typename T>
void check_projection(const Matrix<T>& x, const Matrix<T>& w, const char* name) {
  if (x.cols() != w.rows()) {
    throw DimensionError(std::string("input width ") + std::to_string(x.cols()) +
                         " does not match " + name + " (" +
                         std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ")");
  }
}

}  // namespace

template <typename T>
Matrix<T> layer_norm_forward(const BasicParamStore<T>& params, LayerNormSlots slots,
                             const Matrix<T>& x, LayerNormCache<T>* cache) {
  const auto& gain = params.value(slots.gain);
  const auto& bias = params.value(slots.bias);
  require_shape(gain, 1, x.cols(), "layer-norm gain");

  const Eigen::Index width = x.cols();
  Matrix<T> centered = x.colwise() - x.rowwise().mean();
  Matrix<T> rstd =
      ((centered.array().square().rowwise().sum() / static_cast<T>(width)) +
       static_cast<T>(kLayerNormEpsilon))
          .rsqrt()
          .matrix();
  Matrix<T> normalized = centered.array().colwise() * rstd.col(0).array();
  Matrix<T> out = normalized.array().rowwise() * gain.row(0).array();
  out.rowwise() += bias.row(0);
  debug_check_finite(out, "layer norm");
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->rstd = std::move(rstd);
  }
  return out;
}

template <typename T>
Matrix<T> layer_norm_backward(const BasicParamStore<T>& params, LayerNormSlots slots,
                              const LayerNormCache<T>& cache, const Matrix<T>& dy,
                              Gradients& grads) {
  const auto& gain = params.value(slots.gain);
  grads.accumulate(slots.gain,
                   (dy.array() * cache.normalized.array()).colwise().sum().matrix());
  grads.accumulate(slots.bias, dy.colwise().sum());

  const T inv_width = static_cast<T>(1) / static_cast<T>(dy.cols());
  Matrix<T> dnorm = dy.array().rowwise() * gain.row(0).array();
  const Matrix<T> mean_d = dnorm.rowwise().sum() * inv_width;
  const Matrix<T> mean_dx =
      (dnorm.array() * cache.normalized.array()).rowwise().sum().matrix() * inv_width;
  dnorm.colwise() -= mean_d.col(0);
  dnorm.array() -= cache.normalized.array().colwise() * mean_dx.col(0).array();
  dnorm.array().colwise() *= cache.rstd.col(0).array();
  return dnorm;
}

template <typename T>
Matrix<T> mha_forward(const BasicParamStore<T>& params, AttentionSlots slots,
                      const Matrix<T>& x, AttentionGeometry geometry,
                      AttentionCache<T>* cache) {
  const auto& wq = params.value(slots.wq);
  const auto& wk = params.value(slots.wk);
  const auto& wv = params.value(slots.wv);
  const auto& wo = params.value(slots.wo);
  check_projection(x, wq, "query projection");
  check_projection(x, wk, "key projection");
  check_projection(x, wv, "value projection");
  const Eigen::Index width = wq.cols();
  check_geometry(x.rows(), width, geometry);
  if (wo.rows() != width) {
    throw DimensionError("output projection has " + std::to_string(wo.rows()) +
                         " rows, attention width is " + std::to_string(width));
  }

  const Eigen::Index g = geometry.graph_size;
  const Eigen::Index heads = geometry.heads;
  const Eigen::Index head_width = width / heads;
  const Eigen::Index graphs = x.rows() / g;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_width)));

  Matrix<T> q = x * wq;
  Matrix<T> k = x * wk;
  Matrix<T> v = x * wv;
  Matrix<T> context(x.rows(), width);
  Matrix<T> weights(graphs * heads * g, g);
  Matrix<T> scores(g, g);
  for (Eigen::Index b = 0; b < graphs; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto qb = q.block(b * g, h * head_width, g, head_width);
      const auto kb = k.block(b * g, h * head_width, g, head_width);
      const auto vb = v.block(b * g, h * head_width, g, head_width);
      scores.noalias() = qb * kb.transpose();
      scores *= scale;
      scores.colwise() -= scores.rowwise().maxCoeff();
      scores = scores.array().exp();
      scores.array().colwise() /= scores.rowwise().sum().array();
      weights.block((b * heads + h) * g, 0, g, g) = scores;
      context.block(b * g, h * head_width, g, head_width).noalias() = scores * vb;
    }
  }
  Matrix<T> out = context * wo;
  out.rowwise() += params.value(slots.bo).row(0);
  debug_check_finite(out, "multi-head attention");
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->context = std::move(context);
  }
  return out;
}

template <typename T>
Matrix<T> mha_backward(const BasicParamStore<T>& params, AttentionSlots slots,
                       const AttentionCache<T>& cache, AttentionGeometry geometry,
                       const Matrix<T>& dout, Gradients& grads) {
  const auto& wq = params.value(slots.wq);
  const auto& wk = params.value(slots.wk);
  const auto& wv = params.value(slots.wv);
  const auto& wo = params.value(slots.wo);
  const Eigen::Index width = wq.cols();
  const Eigen::Index g = geometry.graph_size;
  const Eigen::Index heads = geometry.heads;
  const Eigen::Index head_width = width / heads;
  const Eigen::Index graphs = cache.input.rows() / g;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_width)));

  grads.accumulate(slots.wo, cache.context.transpose() * dout);
  grads.accumulate(slots.bo, dout.colwise().sum());
  const Matrix<T> dcontext = dout * wo.transpose();

  Matrix<T> dq(cache.input.rows(), width);
  Matrix<T> dk(cache.input.rows(), width);
  Matrix<T> dv(cache.input.rows(), width);
  Matrix<T> dweights(g, g);
  for (Eigen::Index b = 0; b < graphs; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto p = cache.weights.block((b * heads + h) * g, 0, g, g);
      const auto qb = cache.q.block(b * g, h * head_width, g, head_width);
      const auto kb = cache.k.block(b * g, h * head_width, g, head_width);
      const auto vb = cache.v.block(b * g, h * head_width, g, head_width);
      const auto dctx = dcontext.block(b * g, h * head_width, g, head_width);
      dweights.noalias() = dctx * vb.transpose();
      dv.block(b * g, h * head_width, g, head_width).noalias() = p.transpose() * dctx;
      // softmax Jacobian: dS = P * (dP - rowsum(dP * P))
      const Matrix<T> inner = (dweights.array() * p.array()).rowwise().sum().matrix();
      dweights.colwise() -= inner.col(0);
      dweights.array() *= p.array();
      dweights *= scale;
      dq.block(b * g, h * head_width, g, head_width).noalias() = dweights * kb;
      dk.block(b * g, h * head_width, g, head_width).noalias() =
          dweights.transpose() * qb;
    }
  }
  grads.accumulate(slots.wq, cache.input.transpose() * dq);
  grads.accumulate(slots.wk, cache.input.transpose() * dk);
  grads.accumulate(slots.wv, cache.input.transpose() * dv);
  Matrix<T> dx = dq * wq.transpose();
  dx.noalias() += dk * wk.transpose();
  dx.noalias() += dv * wv.transpose();
  return dx;
}

template <typename T>
Matrix<T> feed_forward(const BasicParamStore<T>& params, FeedForwardSlots slots,
                       const Matrix<T>& x, FeedForwardCache<T>* cache) {
  const auto& w1 = params.value(slots.w1);
  const auto& w2 = params.value(slots.w2);
  check_projection(x, w1, "feed-forward input map");
  Matrix<T> hidden = x * w1;
  hidden.rowwise() += params.value(slots.b1).row(0);
  hidden = hidden.cwiseMax(static_cast<T>(0));
  Matrix<T> out = hidden * w2;
  out.rowwise() += params.value(slots.b2).row(0);
  debug_check_finite(out, "feed-forward");
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
Matrix<T> feed_forward_backward(const BasicParamStore<T>& params,
                                FeedForwardSlots slots,
                                const FeedForwardCache<T>& cache,
                                const Matrix<T>& dout, Gradients& grads) {
  grads.accumulate(slots.w2, cache.hidden.transpose() * dout);
  grads.accumulate(slots.b2, dout.colwise().sum());
  Matrix<T> dhidden = dout * params.value(slots.w2).transpose();
  dhidden = (cache.hidden.array() > static_cast<T>(0)).select(dhidden, static_cast<T>(0));
  grads.accumulate(slots.w1, cache.input.transpose() * dhidden);
  grads.accumulate(slots.b1, dhidden.colwise().sum());
  return dhidden * params.value(slots.w1).transpose();
}

#define POINTROUTE_INSTANTIATE_LAYERS(T)                                        \
  template Matrix<T> layer_norm_forward(const BasicParamStore<T>&,              \
                                        LayerNormSlots, const Matrix<T>&,       \
                                        LayerNormCache<T>*);                    \
  template Matrix<T> layer_norm_backward(const BasicParamStore<T>&,             \
                                         LayerNormSlots,                        \
                                         const LayerNormCache<T>&,              \
                                         const Matrix<T>&, Gradients&);         \
  template Matrix<T> mha_forward(const BasicParamStore<T>&, AttentionSlots,     \
                                 const Matrix<T>&, AttentionGeometry,           \
                                 AttentionCache<T>*);                           \
  template Matrix<T> mha_backward(const BasicParamStore<T>&, AttentionSlots,    \
                                  const AttentionCache<T>&, AttentionGeometry,  \
                                  const Matrix<T>&, Gradients&);                \
  template Matrix<T> feed_forward(const BasicParamStore<T>&, FeedForwardSlots,  \
                                  const Matrix<T>&, FeedForwardCache<T>*);      \
  template Matrix<T> feed_forward_backward(const BasicParamStore<T>&,           \
                                           FeedForwardSlots,                    \
                                           const FeedForwardCache<T>&,          \
                                           const Matrix<T>&, Gradients&);

POINTROUTE_INSTANTIATE_LAYERS(float)
POINTROUTE_INSTANTIATE_LAYERS(double)

#undef POINTROUTE_INSTANTIATE_LAYERS

}  // namespace pointroute
