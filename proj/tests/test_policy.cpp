#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pointroute/decoder.hpp"
#include "pointroute/errors.hpp"
#include "pointroute/policy.hpp"
#include "support/oracles.hpp"

using namespace pointroute;

namespace {

ModelConfig tiny(int d = 8, int layers = 2) {
  ModelConfig c;
  c.d = d;
  c.layers = layers;
  c.heads = 2;
  c.pointers = 3;
  c.pointer_dim = 4;
  return c;
}

Matrix<double> features_of(const Instance& inst) { return featurize(inst); }

Matrix<double> random_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Straight transcription of the pointer head, loop by loop.
std::vector<double> slow_pointer(const Policy<double>& p, const RowVector<double>& q,
                                 const Matrix<double>& nodes, int last, const Instance& inst,
                                 const std::vector<char>& visited, double clip) {
  const auto& wq = p.params().value(p.params().slot("decoder.pointer_q"));
  const auto& wk = p.params().value(p.params().slot("decoder.pointer_k"));
  const int heads = p.config().pointers;
  const int dk = p.config().pointer_dim;
  const int d = p.config().d;
  const int n = static_cast<int>(inst.size());
  std::vector<double> u(n, -INFINITY);
  for (int j = 0; j < n; ++j) {
    if (visited[j]) continue;
    double pn = 0.0;
    for (int h = 0; h < heads; ++h) {
      for (int c = 0; c < dk; ++c) {
        double qh = 0.0;
        double kh = 0.0;
        for (int r = 0; r < d; ++r) {
          qh += q(r) * wq(r, h * dk + c);
          kh += nodes(j, r) * wk(r, h * dk + c);
        }
        pn += qh * kh;
      }
    }
    pn /= heads * std::sqrt(static_cast<double>(dk));
    const double dx = inst[last].x - inst[j].x;
    const double dy = inst[last].y - inst[j].y;
    u[j] = clip * std::tanh(pn - std::sqrt(dx * dx + dy * dy));
  }
  double total = 0.0;
  for (int j = 0; j < n; ++j) total += visited[j] ? 0.0 : std::exp(u[j]);
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < n; ++j) out[j] = visited[j] ? 0.0 : std::exp(u[j]) / total;
  return out;
}

}  // namespace

TEST_CASE("encoder is permutation equivariant") {
  const auto p = Policy<double>::random(tiny(), 1);
  const auto inst = generate_instances(2, 7, 1).front();
  std::vector<int> perm{3, 6, 0, 5, 1, 4, 2};
  std::vector<Point> shuffled;
  for (int i : perm) shuffled.push_back(inst[i]);
  const auto a = encode(p, features_of(inst), 7);
  const auto b = encode(p, features_of(Instance(shuffled)), 7);
  for (int i = 0; i < 7; ++i) {
    CHECK((b.nodes.row(i) - a.nodes.row(perm[i])).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK((a.graphs - b.graphs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero encoder gives zero embeddings") {
  auto p = Policy<double>(tiny());
  const auto e = encode(p, features_of(generate_instances(3, 6, 1).front()), 6);
  CHECK(e.nodes.cwiseAbs().maxCoeff() == 0.0);
  CHECK(e.graphs.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph embedding is the node sum") {
  const auto p = Policy<float>::random(tiny(16, 2), 4);
  const auto insts = generate_instances(4, 9, 3);
  Matrix<float> f(27, kFeatureWidth);
  for (int i = 0; i < 3; ++i) f.middleRows(9 * i, 9) = featurize(insts[i]).cast<float>();
  const auto e = encode(p, f, 9);
  REQUIRE(e.graphs.rows() == 3);
  for (int g = 0; g < 3; ++g) {
    for (int c = 0; c < 16; ++c) {
      double sum = 0.0;
      for (int r = 0; r < 9; ++r) sum += e.nodes(9 * g + r, c);
      CHECK(std::abs(sum - e.graphs(g, c)) <= 1e-4);
    }
  }
  CHECK_THROWS_AS(encode(p, Matrix<float>(10, kFeatureWidth), 9), DimensionError);
  CHECK_THROWS_AS(encode(p, Matrix<float>(9, 12), 9), DimensionError);
}

TEST_CASE("context query combines its four terms") {
  const auto parts = random_rows(4, 8, 1);
  const RowVector<double> graph = parts.row(0);
  ContextState<double> s{parts.row(1), parts.row(2), parts.row(3), 3};
  const auto q = context_query(graph, s, 10);
  const RowVector<double> expected = (graph + s.route) / 10.0 + s.last + s.first;
  CHECK((q - expected).cwiseAbs().maxCoeff() <= 1e-12);

  // Only the depot visited: last = first = route.
  ContextState<double> depot{parts.row(1), parts.row(1), parts.row(1), 1};
  const RowVector<double> expect_depot = (graph + parts.row(1)) / 10.0 + 2.0 * parts.row(1);
  CHECK((context_query(graph, depot, 10) - expect_depot).cwiseAbs().maxCoeff() <= 1e-12);

  ContextState<double> zero{RowVector<double>::Zero(8), RowVector<double>::Zero(8),
                            RowVector<double>::Zero(8), 2};
  CHECK(context_query(RowVector<double>(RowVector<double>::Zero(8)), zero, 5).isZero());
  ContextState<double> empty = zero;
  empty.visited = 0;
  CHECK_THROWS_AS(context_query(graph, empty, 5), ParameterError);
}

TEST_CASE("pointer head with zero projections prefers the nearest node") {
  auto p = Policy<double>::random(tiny(), 2);
  p.zero_pointer_projections();
  const auto inst = generate_instances(5, 8, 1).front();
  const auto nodes = random_rows(8, 8, 3);
  std::vector<char> visited(8, 0);
  visited[2] = visited[5] = 1;
  const auto probs = pointer_distribution(p, RowVector<double>(nodes.row(0)), nodes, 5, inst,
                                          visited, 50.0);
  int nearest = -1;
  for (int j = 0; j < 8; ++j) {
    if (!visited[j] && (nearest < 0 || inst.cost(5, j) < inst.cost(5, nearest))) nearest = j;
  }
  CHECK(std::max_element(probs.begin(), probs.end()) - probs.begin() == nearest);
  double total = 0.0;
  for (int j = 0; j < 8; ++j) {
    if (!visited[j]) total += std::exp(50.0 * std::tanh(-inst.cost(5, j)));
  }
  CHECK(probs[0] == doctest::Approx(std::exp(50.0 * std::tanh(-inst.cost(5, 0))) / total));
}

TEST_CASE("pointer head matches the loop-by-loop reference") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = Policy<double>::random(tiny(), seed);
    const auto inst = generate_instances(seed, 5, 1).front();
    const auto nodes = random_rows(5, 8, seed + 100);
    const RowVector<double> q = random_rows(1, 8, seed + 200);
    std::vector<char> visited(5, 0);
    visited[seed % 5] = 1;
    const int last = static_cast<int>(seed % 5);
    const auto fast = pointer_distribution(p, q, nodes, last, inst, visited, 10.0);
    const auto slow = slow_pointer(p, q, nodes, last, inst, visited, 10.0);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(fast[j] - slow[j]) <= 1e-5);
  }
}

TEST_CASE("pointer head masking and errors") {
  const auto p = Policy<double>::random(tiny(), 3);
  const auto inst = generate_instances(6, 4, 1).front();
  const auto nodes = random_rows(4, 8, 1);
  const RowVector<double> q = nodes.row(1);
  std::vector<char> visited{1, 1, 0, 1};
  const auto one = pointer_distribution(p, q, nodes, 1, inst, visited, 50.0);
  CHECK(one == std::vector<double>{0.0, 0.0, 1.0, 0.0});

  std::vector<char> all(4, 1);
  CHECK_THROWS_AS(pointer_distribution(p, q, nodes, 1, inst, all, 50.0), ParameterError);
  std::vector<char> unvisited_last{1, 0, 0, 0};
  CHECK_THROWS_AS(pointer_distribution(p, q, nodes, 2, inst, unvisited_last, 50.0),
                  ParameterError);
  CHECK_THROWS_AS(pointer_distribution(p, q, random_rows(3, 8, 1), 0, inst, visited, 50.0),
                  DimensionError);
}

TEST_CASE("pointer head is permutation equivariant") {
  const auto p = Policy<double>::random(tiny(), 8);
  const auto inst = generate_instances(8, 6, 1).front();
  const auto nodes = random_rows(6, 8, 2);
  const RowVector<double> q = random_rows(1, 8, 3);
  std::vector<char> visited{0, 1, 0, 0, 1, 0};
  const auto base = pointer_distribution(p, q, nodes, 4, inst, visited, 50.0);

  const std::vector<int> perm{5, 2, 4, 0, 1, 3};  // new index i holds old node perm[i]
  std::vector<Point> coords;
  Matrix<double> pnodes(6, 8);
  std::vector<char> pvisited(6);
  int plast = -1;
  for (int i = 0; i < 6; ++i) {
    coords.push_back(inst[perm[i]]);
    pnodes.row(i) = nodes.row(perm[i]);
    pvisited[i] = visited[perm[i]];
    if (perm[i] == 4) plast = i;
  }
  const auto moved = pointer_distribution(p, q, pnodes, plast, Instance(coords), pvisited, 50.0);
  for (int i = 0; i < 6; ++i) CHECK(moved[i] == doctest::Approx(base[perm[i]]).epsilon(1e-12));
}

TEST_CASE("entropy does not increase with the clipping constant") {
  const auto p = Policy<double>::random(tiny(), 9);
  const auto inst = generate_instances(9, 12, 1).front();
  const auto nodes = random_rows(12, 8, 4);
  const RowVector<double> q = random_rows(1, 8, 5);
  std::vector<char> visited(12, 0);
  visited[0] = 1;
  double previous = INFINITY;
  for (double clip : {1.0, 10.0, 50.0, 100.0}) {
    const double h = oracle::entropy(pointer_distribution(p, q, nodes, 0, inst, visited, clip));
    CHECK(h <= previous);
    previous = h;
  }
}

TEST_CASE("collapsed bilinear form equals the per-head sum") {
  const auto p = Policy<double>::random(tiny(), 10);
  const auto m = pointer_bilinear(p);
  const auto& wq = p.params().value(p.layout().pointer_query);
  const auto& wk = p.params().value(p.layout().pointer_key);
  const RowVector<double> a = random_rows(1, 8, 1);
  const RowVector<double> b = random_rows(1, 8, 2);
  double per_head = 0.0;
  for (int h = 0; h < 3; ++h) {
    const RowVector<double> qa = a * wq.middleCols(4 * h, 4);
    const RowVector<double> kb = b * wk.middleCols(4 * h, 4);
    per_head += qa.dot(kb);
  }
  per_head /= 3 * 2.0;
  CHECK(a.dot(b * m.transpose()) == doctest::Approx(per_head).epsilon(1e-12));
}

TEST_CASE("decoder steps agree with the reference pointer head") {
  const auto p = Policy<double>::random(tiny(16, 2), 11);
  const auto inst = generate_instances(12, 7, 1).front();
  const auto fwd = forward_batch(p, std::span<const Instance>(&inst, 1),
                                 BatchOptions{DecodeMode::kSample, 5, 0, nullptr});
  const auto& tape = fwd.tapes.front();
  const auto& nodes = fwd.encoding.nodes;
  const RowVector<double> graph = fwd.encoding.graphs.row(0);
  for (int s = 0; s < 7; ++s) {
    const auto order = tape.order(s);
    ContextState<double> st{nodes.row(s), nodes.row(s), nodes.row(s), 1};
    std::vector<char> visited(7, 0);
    visited[s] = 1;
    double logp = 0.0;
    for (int step = 0; step < 6; ++step) {
      const auto q = context_query(graph, st, 7);
      const auto ref = pointer_distribution(p, q, nodes, order[step], inst, visited, 50.0);
      const int r = s * 6 + step;
      for (int j = 0; j < 7; ++j) CHECK(std::abs(tape.probs(r, j) - ref[j]) <= 1e-9);
      const int next = order[step + 1];
      logp += std::log(ref[next]);
      visited[next] = 1;
      st.last = nodes.row(next);
      st.route += nodes.row(next);
      ++st.visited;
    }
    CHECK(tape.log_prob(s) == doctest::Approx(logp).epsilon(1e-9));
  }
}

TEST_CASE("decoder masks visited nodes exactly") {
  const auto p = Policy<float>::random(tiny(16, 2), 12);
  const auto insts = generate_instances(13, 9, 4);
  const auto fwd = forward_batch(p, std::span<const Instance>(insts),
                                 BatchOptions{DecodeMode::kSample, 3, 0, nullptr});
  for (const auto& tape : fwd.tapes) {
    for (int s = 0; s < tape.n; ++s) {
      const auto order = tape.order(s);
      for (int step = 0; step < tape.n - 1; ++step) {
        const int r = s * (tape.n - 1) + step;
        double total = 0.0;
        for (int j = 0; j < tape.n; ++j) total += tape.probs(r, j);
        CHECK(std::abs(total - 1.0) <= 1e-6);
        for (int k = 0; k <= step; ++k) CHECK(tape.probs(r, order[k]) == 0.0f);
        CHECK(tape.step_log_probs[r] <= 0.0);
      }
    }
  }
}

TEST_CASE("batches must share one instance size") {
  const auto p = Policy<float>::random(tiny(), 1);
  std::vector<Instance> mixed{generate_instances(1, 5, 1).front(),
                              generate_instances(1, 6, 1).front()};
  CHECK_THROWS_AS(forward_batch(p, std::span<const Instance>(mixed), BatchOptions{}),
                  DimensionError);
}
