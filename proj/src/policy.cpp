#include "pointroute/policy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

std::atomic<std::size_t> g_encoder_invocations{0};

struct Shape {
  Eigen::Index rows;
  Eigen::Index cols;
};

enum class Init { kZero, kOne, kLinear };

struct SlotSpec {
  std::string name;
  Shape shape;
  Init init;
  Eigen::Index fan_in;  // for kLinear
};

// Every parameter in creation order together with the slot layout.
std::pair<std::vector<SlotSpec>, PolicyLayout> plan_layout(const ModelConfig& c) {
  std::vector<SlotSpec> specs;
  const auto add = [&](std::string name, Shape shape, Init init, Eigen::Index fan_in) {
    specs.push_back({std::move(name), shape, init, fan_in});
    return specs.size() - 1;
  };
  const Eigen::Index d = c.d;
  const Eigen::Index hidden = 4 * d;
  const Eigen::Index pointer_width = static_cast<Eigen::Index>(c.pointers) * c.pointer_dim;

  PolicyLayout layout;
  layout.embed_weight = add("embed.weight", {kFeatureWidth, d}, Init::kLinear, kFeatureWidth);
  layout.embed_bias = add("embed.bias", {1, d}, Init::kLinear, kFeatureWidth);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    RevLayerSlots s;
    s.attn_norm.gain = add(p + "attn_norm.gain", {1, d}, Init::kOne, 0);
    s.attn_norm.bias = add(p + "attn_norm.bias", {1, d}, Init::kZero, 0);
    s.attn.wq = add(p + "attn.wq", {d, d}, Init::kLinear, d);
    s.attn.wk = add(p + "attn.wk", {d, d}, Init::kLinear, d);
    s.attn.wv = add(p + "attn.wv", {d, d}, Init::kLinear, d);
    s.attn.wo = add(p + "attn.wo", {d, d}, Init::kLinear, d);
    s.attn.bo = add(p + "attn.bo", {1, d}, Init::kLinear, d);
    s.ff_norm.gain = add(p + "ff_norm.gain", {1, d}, Init::kOne, 0);
    s.ff_norm.bias = add(p + "ff_norm.bias", {1, d}, Init::kZero, 0);
    s.ff.w1 = add(p + "ff.w1", {d, hidden}, Init::kLinear, d);
    s.ff.b1 = add(p + "ff.b1", {1, hidden}, Init::kLinear, d);
    s.ff.w2 = add(p + "ff.w2", {hidden, d}, Init::kLinear, hidden);
    s.ff.b2 = add(p + "ff.b2", {1, d}, Init::kLinear, hidden);
    layout.layers.push_back(s);
  }
  layout.pointer_query = add("decoder.pointer_q", {d, pointer_width}, Init::kLinear, d);
  layout.pointer_key = add("decoder.pointer_k", {d, pointer_width}, Init::kLinear, d);
  return {std::move(specs), std::move(layout)};
}

}  // namespace

double angle_feature(double x, double y, AngleFeature kind) {
  if (kind == AngleFeature::kAtan2) {
    if (x == 0.0 && y == 0.0) return 0.0;
    return std::atan2(y, x);
  }
  constexpr double kLimit = 1.0 - 1e-6;
  if (x == 0.0) return y == 0.0 ? 0.0 : std::atanh(std::copysign(kLimit, y));
  return std::atanh(std::clamp(y / x, -kLimit, kLimit));
}

Matrix<double> featurize(const Instance& instance, AngleFeature kind) {
  if (!instance.in_unit_square()) {
    throw ParameterError("featurize needs coordinates in [0,1]^2; normalize '" +
                         instance.name() + "' first");
  }
  Matrix<double> out(static_cast<Eigen::Index>(instance.size()), kFeatureWidth);
  for (std::size_t i = 0; i < instance.size(); ++i) {
    const auto images = apply_symmetries(instance[i]);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(3 * k);
      const auto row = static_cast<Eigen::Index>(i);
      out(row, col) = images[k].x;
      out(row, col + 1) = images[k].y;
      out(row, col + 2) = angle_feature(images[k].x, images[k].y, kind);
    }
  }
  return out;
}

template <typename T>
Policy<T>::Policy(ModelConfig config) : config_(config) {
  config_.validate();
  auto [specs, layout] = plan_layout(config_);
  for (const auto& s : specs) {
    Matrix<T> value = s.init == Init::kOne
                          ? Matrix<T>::Ones(s.shape.rows, s.shape.cols).eval()
                          : Matrix<T>::Zero(s.shape.rows, s.shape.cols).eval();
    params_.add(s.name, std::move(value));
  }
  layout_ = std::move(layout);
}

template <typename T>
Policy<T> Policy<T>::random(ModelConfig config, std::uint64_t seed) {
  Policy policy(config);
  auto [specs, layout] = plan_layout(policy.config_);
  std::mt19937_64 rng(seed);
  for (std::size_t slot = 0; slot < specs.size(); ++slot) {
    if (specs[slot].init != Init::kLinear) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(specs[slot].fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& value = policy.params_.value(slot);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      value.data()[i] = static_cast<T>(dist(rng));
    }
  }
  return policy;
}

template <typename T>
Policy<T> Policy<T>::from_params(ModelConfig config, BasicParamStore<T> params) {
  config.validate();
  auto [specs, layout] = plan_layout(config);
  BasicParamStore<T> ordered;
  for (const auto& s : specs) {
    if (!params.contains(s.name)) {
      throw CheckpointError(CheckpointError::Kind::kShape,
                            "missing parameter '" + s.name + "'");
    }
    auto& value = params.value(params.slot(s.name));
    if (value.rows() != s.shape.rows || value.cols() != s.shape.cols) {
      throw CheckpointError(
          CheckpointError::Kind::kShape,
          "parameter '" + s.name + "' is " + std::to_string(value.rows()) + "x" +
              std::to_string(value.cols()) + ", model expects " +
              std::to_string(s.shape.rows) + "x" + std::to_string(s.shape.cols));
    }
    ordered.add(s.name, std::move(value));
  }
  if (params.size() != specs.size()) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          "checkpoint holds " + std::to_string(params.size()) +
                              " tensors, model expects " +
                              std::to_string(specs.size()));
  }
  return Policy(config, std::move(ordered), std::move(layout));
}

template <typename T>
void Policy<T>::zero_pointer_projections() {
  params_.value(layout_.pointer_query).setZero();
  params_.value(layout_.pointer_key).setZero();
}

template <typename T>
Encoding<T> encode(const Policy<T>& policy, const Matrix<T>& features, int graph_size) {
  const auto& layout = policy.layout();
  const auto& params = policy.params();
  if (features.cols() != kFeatureWidth) {
    throw DimensionError("encoder features have " + std::to_string(features.cols()) +
                         " columns, expected " + std::to_string(kFeatureWidth));
  }
  if (graph_size <= 0 || features.rows() % graph_size != 0) {
    throw DimensionError("encoder input rows " + std::to_string(features.rows()) +
                         " not a multiple of graph size " + std::to_string(graph_size));
  }
  const Eigen::Index graphs = features.rows() / graph_size;
  g_encoder_invocations.fetch_add(static_cast<std::size_t>(graphs),
                                  std::memory_order_relaxed);

  Matrix<T> h0 = features * params.value(layout.embed_weight);
  h0.rowwise() += params.value(layout.embed_bias).row(0);

  Encoding<T> out;
  out.graph_size = graph_size;
  out.stack_output = rev_stack_forward<T>(params, layout.layers, h0, h0,
                                          policy.geometry(graph_size));
  out.nodes = (out.stack_output.first + out.stack_output.second) * static_cast<T>(0.5);
  out.graphs.resize(graphs, out.nodes.cols());
  for (Eigen::Index b = 0; b < graphs; ++b) {
    out.graphs.row(b) = out.nodes.middleRows(b * graph_size, graph_size).colwise().sum();
  }
  debug_check_finite(out.nodes, "encoder");
  return out;
}

template <typename T>
void encode_backward(const Policy<T>& policy, const Matrix<T>& features,
                     const Encoding<T>& encoding, const Matrix<T>& dnodes,
                     const Matrix<T>& dgraphs, Gradients& grads, BackwardTrace* trace) {
  const auto& layout = policy.layout();
  const int g = encoding.graph_size;
  Matrix<T> dtotal = dnodes;
  for (Eigen::Index b = 0; b < dgraphs.rows(); ++b) {
    dtotal.middleRows(b * g, g).rowwise() += dgraphs.row(b);
  }
  dtotal *= static_cast<T>(0.5);
  auto back = rev_stack_backward<T>(policy.params(), layout.layers,
                                    encoding.stack_output.first,
                                    encoding.stack_output.second, dtotal, dtotal,
                                    policy.geometry(g), grads, trace);
  const Matrix<T> dh0 = back.input_grads.first + back.input_grads.second;
  grads.accumulate(layout.embed_weight, features.transpose() * dh0);
  grads.accumulate(layout.embed_bias, dh0.colwise().sum());
}

std::size_t encoder_invocations() {
  return g_encoder_invocations.load(std::memory_order_relaxed);
}

template <typename T>
RowVector<T> context_query(const RowVector<T>& graph, const ContextState<T>& state, int n) {
  if (state.visited < 1) {
    throw ParameterError("context query needs a non-empty route");
  }
  if (n < 1) throw ParameterError("context query needs n >= 1");
  return (graph + state.route) / static_cast<T>(n) + state.last + state.first;
}

template <typename T>
std::vector<double> pointer_distribution(const Policy<T>& policy, const RowVector<T>& q,
                                         const Matrix<T>& nodes, int last,
                                         const Instance& instance,
                                         std::span<const char> visited, double clip) {
  const auto& cfg = policy.config();
  const auto n = static_cast<Eigen::Index>(instance.size());
  if (nodes.rows() != n || nodes.cols() != cfg.d || q.cols() != cfg.d) {
    throw DimensionError("pointer head expects q of width " + std::to_string(cfg.d) +
                         " and " + std::to_string(n) + " node embeddings");
  }
  if (static_cast<Eigen::Index>(visited.size()) != n) {
    throw DimensionError("visited mask length does not match the instance");
  }
  if (last < 0 || last >= n || !visited[last]) {
    throw ParameterError("last node " + std::to_string(last) + " is not visited");
  }
  if (std::all_of(visited.begin(), visited.end(), [](char v) { return v != 0; })) {
    throw ParameterError("pointer distribution has no unvisited candidates");
  }

  const auto& wq = policy.params().value(policy.layout().pointer_query);
  const auto& wk = policy.params().value(policy.layout().pointer_key);
  const Eigen::Index dk = cfg.pointer_dim;
  const Matrix<T> keys = nodes * wk;     // n x (H * d_k), once per call
  const RowVector<T> queries = q * wq;   // 1 x (H * d_k)
  const double norm = 1.0 / (cfg.pointers * std::sqrt(static_cast<double>(dk)));

  std::vector<double> logits(static_cast<std::size_t>(n),
                             -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (visited[j]) continue;
    double pn = 0.0;
    for (int h = 0; h < cfg.pointers; ++h) {
      pn += static_cast<double>(
          queries.segment(h * dk, dk).dot(keys.row(j).segment(h * dk, dk)));
    }
    pn *= norm;
    const double score = pn - instance.cost(last, j);
    logits[j] = clip * std::tanh(score);
    top = std::max(top, logits[j]);
  }
  std::vector<double> probs(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (visited[j]) continue;
    probs[j] = std::exp(logits[j] - top);
    total += probs[j];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

template <typename T>
Matrix<T> pointer_bilinear(const Policy<T>& policy) {
  const auto& cfg = policy.config();
  const auto& wq = policy.params().value(policy.layout().pointer_query);
  const auto& wk = policy.params().value(policy.layout().pointer_key);
  const double norm = 1.0 / (cfg.pointers * std::sqrt(static_cast<double>(cfg.pointer_dim)));
  return (wq * wk.transpose()) * static_cast<T>(norm);
}

template <typename T>
void pointer_bilinear_backward(const Policy<T>& policy, const Matrix<double>& dbilinear,
                               Gradients& grads) {
  const auto& cfg = policy.config();
  const auto& layout = policy.layout();
  const Matrix<double> wq = policy.params().value(layout.pointer_query).template cast<double>();
  const Matrix<double> wk = policy.params().value(layout.pointer_key).template cast<double>();
  const double norm = 1.0 / (cfg.pointers * std::sqrt(static_cast<double>(cfg.pointer_dim)));
  grads[layout.pointer_query].noalias() += norm * (dbilinear * wk);
  grads[layout.pointer_key].noalias() += norm * (dbilinear.transpose() * wq);
}

#define POINTROUTE_INSTANTIATE_POLICY(T)                                           \
  template class Policy<T>;                                                        \
  template Encoding<T> encode(const Policy<T>&, const Matrix<T>&, int);            \
  template void encode_backward(const Policy<T>&, const Matrix<T>&,                \
                                const Encoding<T>&, const Matrix<T>&,              \
                                const Matrix<T>&, Gradients&, BackwardTrace*);     \
  template RowVector<T> context_query(const RowVector<T>&, const ContextState<T>&, \
                                      int);                                        \
  template std::vector<double> pointer_distribution(                               \
      const Policy<T>&, const RowVector<T>&, const Matrix<T>&, int,                \
      const Instance&, std::span<const char>, double);                             \
  template Matrix<T> pointer_bilinear(const Policy<T>&);                           \
  template void pointer_bilinear_backward(const Policy<T>&, const Matrix<double>&, \
                                          Gradients&);

POINTROUTE_INSTANTIATE_POLICY(float)
POINTROUTE_INSTANTIATE_POLICY(double)

#undef POINTROUTE_INSTANTIATE_POLICY

}  // namespace pointroute
