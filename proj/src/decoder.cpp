#include "pointroute/decoder.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_forced(const std::vector<std::vector<int>>& forced, int n) {
  if (static_cast<int>(forced.size()) != n) {
    throw ParameterError("forced decode needs " + std::to_string(n) +
                         " orders, got " + std::to_string(forced.size()));
  }
  for (int s = 0; s < n; ++s) {
    validate_tour(static_cast<std::size_t>(n), forced[s]);
    if (forced[s].front() != s) {
      throw ParameterError("forced order " + std::to_string(s) + " starts at node " +
                           std::to_string(forced[s].front()));
    }
  }
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t root, std::uint64_t instance, std::uint64_t start) {
  return splitmix64(splitmix64(splitmix64(root) ^ instance) ^ start);
}

template <typename T>
double DecodeTape<T>::log_prob(int start) const {
  const auto begin = step_log_probs.begin() + static_cast<std::ptrdiff_t>(start) * (n - 1);
  return std::accumulate(begin, begin + (n - 1), 0.0);
}

template <typename T>
DecodeTape<T> decode(const Policy<T>& policy, const Instance& instance,
                     const Matrix<T>& nodes, const RowVector<T>& graph,
                     const Matrix<T>& bilinear, const DecodeOptions& options) {
  const int n = static_cast<int>(instance.size());
  const int d = policy.config().d;
  const double clip = policy.config().clip;
  require_shape(nodes, n, d, "decoder node embeddings");
  if (options.mode == DecodeMode::kForced) {
    if (!options.forced) throw ParameterError("forced decode without orders");
    check_forced(*options.forced, n);
  }

  DecodeTape<T> tape;
  tape.n = n;
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * (n - 1);
  tape.orders.assign(static_cast<std::size_t>(n) * n, -1);
  tape.keys = nodes * bilinear.transpose();
  tape.queries.resize(rows, d);
  tape.probs.setZero(rows, n);
  tape.score_slope.setZero(rows, n);
  tape.chosen.assign(static_cast<std::size_t>(rows), -1);
  tape.step_log_probs.assign(static_cast<std::size_t>(rows), 0.0);

  std::vector<std::mt19937_64> streams;
  if (options.mode == DecodeMode::kSample) {
    streams.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      streams.emplace_back(stream_seed(options.seed, options.instance_index,
                                       static_cast<std::uint64_t>(s)));
    }
  }

  std::vector<char> visited(static_cast<std::size_t>(n) * n, 0);
  Matrix<T> route = nodes;  // running embedding sums, one row per start
  for (int s = 0; s < n; ++s) {
    tape.orders[static_cast<std::size_t>(s) * n] = s;
    visited[static_cast<std::size_t>(s) * n + s] = 1;
  }

  const T inv_n = static_cast<T>(1) / static_cast<T>(n);
  Matrix<T> queries(n, d);
  Matrix<T> pointer(n, n);
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (int step = 0; step + 1 < n; ++step) {
    for (int s = 0; s < n; ++s) {
      const int last = tape.orders[static_cast<std::size_t>(s) * n + step];
      queries.row(s) = (graph + route.row(s)) * inv_n + nodes.row(last) + nodes.row(s);
    }
    pointer.noalias() = queries * tape.keys.transpose();

    for (int s = 0; s < n; ++s) {
      const Eigen::Index r = static_cast<Eigen::Index>(s) * (n - 1) + step;
      const char* seen = visited.data() + static_cast<std::size_t>(s) * n;
      const int last = tape.orders[static_cast<std::size_t>(s) * n + step];
      tape.queries.row(r) = queries.row(s);

      double top = -std::numeric_limits<double>::infinity();
      int best = -1;
      for (int j = 0; j < n; ++j) {
        if (seen[j]) continue;
        const double score = static_cast<double>(pointer(s, j)) - instance.cost(last, j);
        const double th = std::tanh(score);
        logits[j] = clip * th;
        tape.score_slope(r, j) = static_cast<T>(clip * (1.0 - th * th));
        if (logits[j] > top) {
          top = logits[j];
          best = j;
        }
      }
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        if (!seen[j]) total += std::exp(logits[j] - top);
      }
      const double log_total = std::log(total);

      int next = best;
      if (options.mode == DecodeMode::kSample) {
        const double u = std::generate_canonical<double, 53>(streams[s]) * total;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          if (seen[j]) continue;
          next = j;
          acc += std::exp(logits[j] - top);
          if (u < acc) break;
        }
      } else if (options.mode == DecodeMode::kForced) {
        next = (*options.forced)[s][step + 1];
      }

      for (int j = 0; j < n; ++j) {
        if (!seen[j]) tape.probs(r, j) = static_cast<T>(std::exp(logits[j] - top - log_total));
      }
      tape.chosen[r] = next;
      tape.step_log_probs[r] = logits[next] - top - log_total;
      tape.orders[static_cast<std::size_t>(s) * n + step + 1] = next;
      visited[static_cast<std::size_t>(s) * n + next] = 1;
      route.row(s) += nodes.row(next);
    }
  }
  return tape;
}

template <typename T>
void decode_backward(const DecodeTape<T>& tape, const Matrix<T>& nodes,
                     const Matrix<T>& bilinear, std::span<const double> weights,
                     Matrix<T>& dnodes, RowVector<T>& dgraph,
                     Matrix<double>& dbilinear) {
  const int n = tape.n;
  if (static_cast<int>(weights.size()) != n) {
    throw DimensionError("decode backward needs one weight per start");
  }
  const Eigen::Index rows = tape.queries.rows();

  // d loss / d pointer logits, row by row.
  Matrix<T> dpointer = -tape.probs;
  for (Eigen::Index r = 0; r < rows; ++r) {
    dpointer(r, tape.chosen[r]) += static_cast<T>(1);
    const auto w = static_cast<T>(weights[static_cast<std::size_t>(r / (n - 1))]);
    dpointer.row(r).array() *= tape.score_slope.row(r).array() * w;
  }

  const Matrix<T> dqueries = dpointer * tape.keys;
  const Matrix<T> dkeys = dpointer.transpose() * tape.queries;
  dnodes.noalias() += dkeys * bilinear;
  dbilinear.noalias() += (dkeys.transpose() * nodes).template cast<double>();

  const T inv_n = static_cast<T>(1) / static_cast<T>(n);
  dgraph += dqueries.colwise().sum() * inv_n;
  RowVector<T> suffix(nodes.cols());
  for (int s = 0; s < n; ++s) {
    const auto order = tape.order(s);
    suffix.setZero();
    for (int step = n - 2; step >= 0; --step) {
      const auto dq = dqueries.row(static_cast<Eigen::Index>(s) * (n - 1) + step);
      dnodes.row(order[step]) += dq;  // last visited node
      dnodes.row(s) += dq;            // first node
      suffix += dq * inv_n;           // route sum covers order[0..step]
      dnodes.row(order[step]) += suffix;
    }
  }
}

template <typename T>
BatchForward<T> forward_batch(const Policy<T>& policy, std::span<const Instance> instances,
                              const BatchOptions& options) {
  if (instances.empty()) throw ParameterError("empty batch");
  const auto n = static_cast<Eigen::Index>(instances.front().size());
  BatchForward<T> out;
  out.graph_size = static_cast<int>(n);
  out.features.resize(n * static_cast<Eigen::Index>(instances.size()), kFeatureWidth);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<Eigen::Index>(instances[i].size()) != n) {
      throw DimensionError("batch mixes instance sizes " + std::to_string(n) +
                           " and " + std::to_string(instances[i].size()));
    }
    out.features.middleRows(static_cast<Eigen::Index>(i) * n, n) =
        featurize(instances[i], policy.config().angle).template cast<T>();
  }
  out.encoding = encode(policy, out.features, out.graph_size);
  out.bilinear = pointer_bilinear(policy);

  out.tapes.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    DecodeOptions opts;
    opts.mode = options.mode;
    opts.seed = options.seed;
    opts.instance_index = options.first_instance_index + i;
    if (options.mode == DecodeMode::kForced) {
      if (!options.forced || options.forced->size() != instances.size()) {
        throw ParameterError("forced batch decode needs orders for every instance");
      }
      opts.forced = &(*options.forced)[i];
    }
    const Matrix<T> nodes = out.encoding.nodes.middleRows(static_cast<Eigen::Index>(i) * n, n);
    out.tapes.push_back(decode(policy, instances[i], nodes,
                               RowVector<T>(out.encoding.graphs.row(static_cast<Eigen::Index>(i))),
                               out.bilinear, opts));
  }
  return out;
}

template <typename T>
void backward_batch(const Policy<T>& policy, const BatchForward<T>& forward,
                    const std::vector<std::vector<double>>& weights, Gradients& grads,
                    BackwardTrace* trace) {
  if (weights.size() != forward.tapes.size()) {
    throw DimensionError("backward needs one weight row per instance");
  }
  const Eigen::Index n = forward.graph_size;
  Matrix<T> dnodes = Matrix<T>::Zero(forward.encoding.nodes.rows(), forward.encoding.nodes.cols());
  Matrix<T> dgraphs = Matrix<T>::Zero(forward.encoding.graphs.rows(), forward.encoding.graphs.cols());
  Matrix<double> dbilinear = Matrix<double>::Zero(forward.bilinear.rows(), forward.bilinear.cols());
  for (std::size_t i = 0; i < forward.tapes.size(); ++i) {
    const auto row0 = static_cast<Eigen::Index>(i) * n;
    const Matrix<T> nodes = forward.encoding.nodes.middleRows(row0, n);
    Matrix<T> dn = Matrix<T>::Zero(n, nodes.cols());
    RowVector<T> dg = RowVector<T>::Zero(nodes.cols());
    decode_backward(forward.tapes[i], nodes, forward.bilinear, weights[i], dn, dg, dbilinear);
    dnodes.middleRows(row0, n) += dn;
    dgraphs.row(static_cast<Eigen::Index>(i)) += dg;
  }
  pointer_bilinear_backward(policy, dbilinear, grads);
  encode_backward(policy, forward.features, forward.encoding, dnodes, dgraphs, grads, trace);
}

#define POINTROUTE_INSTANTIATE_DECODER(T)                                           \
  template struct DecodeTape<T>;                                                    \
  template DecodeTape<T> decode(const Policy<T>&, const Instance&, const Matrix<T>&, \
                                const RowVector<T>&, const Matrix<T>&,              \
                                const DecodeOptions&);                              \
  template void decode_backward(const DecodeTape<T>&, const Matrix<T>&,             \
                                const Matrix<T>&, std::span<const double>,          \
                                Matrix<T>&, RowVector<T>&, Matrix<double>&);        \
  template BatchForward<T> forward_batch(const Policy<T>&, std::span<const Instance>, \
                                         const BatchOptions&);                      \
  template void backward_batch(const Policy<T>&, const BatchForward<T>&,            \
                               const std::vector<std::vector<double>>&, Gradients&, \
                               BackwardTrace*);

POINTROUTE_INSTANTIATE_DECODER(float)
POINTROUTE_INSTANTIATE_DECODER(double)

#undef POINTROUTE_INSTANTIATE_DECODER

}  // namespace pointroute
