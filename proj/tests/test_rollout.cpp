#include <cmath>
#include <set>

#include "doctest.h"
#include "pointroute/baselines.hpp"
#include "pointroute/errors.hpp"
#include "pointroute/rollout.hpp"

using namespace pointroute;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d = 16;
  c.layers = 2;
  c.heads = 2;
  c.pointers = 2;
  c.pointer_dim = 8;
  return c;
}

Trajectory with_probs(std::vector<double> probs) {
  Trajectory t;
  for (double p : probs) t.step_log_probs.push_back(std::log(p));
  return t;
}

}  // namespace

TEST_CASE("one valid trajectory per start node") {
  const auto model = PolicyModel::random(tiny(), 1);
  const auto inst = generate_instances(1, 3, 1).front();
  for (auto mode : {DecodeMode::kGreedy, DecodeMode::kSample}) {
    const auto trajs = multi_start_rollout(model, inst, mode, 4);
    REQUIRE(trajs.size() == 3);
    for (int s = 0; s < 3; ++s) {
      CHECK(trajs[s].order.front() == s);
      CHECK_NOTHROW(validate_tour(inst, trajs[s].order));
      CHECK(trajs[s].step_log_probs.size() == 2);
      CHECK(trajs[s].reward == -tour_length(inst, trajs[s].order));
      for (double lp : trajs[s].step_log_probs) CHECK(lp <= 0.0);
    }
  }
}

TEST_CASE("zero pointer projections reduce to nearest neighbor") {
  auto model = PolicyModel::random(tiny(), 2);
  model.zero_pointer_projections();
  const Instance line({{0, 0}, {1, 0}, {2, 0}});
  const auto normalized = normalize_to_unit_square(line).instance;
  const auto trajs = multi_start_rollout(model, normalized, DecodeMode::kGreedy);
  CHECK(trajs[0].order == std::vector<int>{0, 1, 2});
  CHECK(tour_length(line, trajs[0].order) == doctest::Approx(4.0));
  CHECK(trajs[1].order == std::vector<int>{1, 0, 2});

  for (const auto& inst : generate_instances(17, 15, 10)) {
    const auto greedy = multi_start_rollout(model, inst, DecodeMode::kGreedy);
    for (int s = 0; s < 15; ++s) CHECK(greedy[s].order == nearest_neighbor(inst, s).order());
  }
}

TEST_CASE("rollouts are reproducible") {
  const auto model = PolicyModel::random(tiny(), 3);
  const auto inst = generate_instances(3, 12, 1).front();
  const auto a = multi_start_rollout(model, inst, DecodeMode::kSample, 9);
  const auto b = multi_start_rollout(model, inst, DecodeMode::kSample, 9);
  const auto c = multi_start_rollout(model, inst, DecodeMode::kSample, 10);
  bool differs = false;
  for (int s = 0; s < 12; ++s) {
    CHECK(a[s].order == b[s].order);
    CHECK(a[s].step_log_probs == b[s].step_log_probs);
    differs = differs || a[s].order != c[s].order;
  }
  CHECK(differs);
  const auto g1 = multi_start_rollout(model, inst, DecodeMode::kGreedy);
  const auto g2 = multi_start_rollout(model, inst, DecodeMode::kGreedy);
  for (int s = 0; s < 12; ++s) CHECK(g1[s].order == g2[s].order);
  CHECK_THROWS_AS(multi_start_rollout(model, inst, DecodeMode::kSample), ParameterError);
}

TEST_CASE("batched rollouts do not depend on the worker split") {
  const auto model = PolicyModel::random(tiny(), 4);
  const auto insts = generate_instances(4, 10, 7);
  const auto one = rollout_batch(model, insts, DecodeMode::kSample, 21, 1);
  const auto three = rollout_batch(model, insts, DecodeMode::kSample, 21, 3);
  REQUIRE(one.trajectories.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    REQUIRE(one.trajectories[i].size() == 10);
    for (int s = 0; s < 10; ++s) {
      CHECK(one.trajectories[i][s].order == three.trajectories[i][s].order);
      CHECK(one.trajectories[i][s].order.front() == s);
    }
  }
}

TEST_CASE("encoder runs once per instance") {
  const auto model = PolicyModel::random(tiny(), 5);
  const auto insts = generate_instances(5, 8, 6);
  const auto before = encoder_invocations();
  rollout_batch(model, insts, DecodeMode::kSample, 1, 2);
  CHECK(encoder_invocations() - before == 6);
  const auto mid = encoder_invocations();
  multi_start_rollout(model, insts[0], DecodeMode::kGreedy);
  CHECK(encoder_invocations() - mid == 1);
}

TEST_CASE("best of picks the shortest, lowest index on ties") {
  CHECK(best_index(std::vector<double>{5.0, 4.0, 6.0}) == 1);
  CHECK(best_index(std::vector<double>{2.0, 2.0, 2.0}) == 0);
  CHECK_THROWS_AS(best_index(std::vector<double>{}), ParameterError);
  const auto inst = generate_instances(1, 4, 1).front();
  CHECK_THROWS_AS(best_of(inst, std::vector<Trajectory>{}), ParameterError);

  const auto model = PolicyModel::random(tiny(), 6);
  for (const auto& i : generate_instances(77, 10, 100)) {
    const auto trajs = multi_start_rollout(model, i, DecodeMode::kSample, 3);
    const Tour best = best_of(i, trajs);
    for (const auto& t : trajs) CHECK(best.length() <= t.length());
  }
}

TEST_CASE("trajectory log-probability") {
  CHECK(trajectory_log_prob(with_probs({1.0, 1.0})) == 0.0);
  CHECK(trajectory_log_prob(with_probs({0.5, 0.5})) == doctest::Approx(std::log(0.25)));

  const auto model = PolicyModel::random(tiny(), 7);
  const auto inst = generate_instances(8, 9, 1).front();
  const auto trajs = multi_start_rollout(model, inst, DecodeMode::kSample, 5);
  std::vector<std::vector<int>> orders;
  for (const auto& t : trajs) orders.push_back(t.order);
  const auto rescored = rescore(model, inst, orders);
  for (int s = 0; s < 9; ++s) {
    CHECK(std::abs(rescored[s] - trajectory_log_prob(trajs[s])) <= 1e-5);
  }
  orders[2].front() = 3;
  CHECK_THROWS(rescore(model, inst, orders));
}

TEST_CASE("first-step sampling frequencies follow the distribution") {
  const auto model = PolicyModel::random(tiny(), 8);
  const auto inst = generate_instances(9, 4, 1).front();
  const auto fwd = forward_batch(model, std::span<const Instance>(&inst, 1), BatchOptions{});
  const Matrix<float> nodes = fwd.encoding.nodes;
  const RowVector<float> graph = fwd.encoding.graphs.row(0);
  const auto& probs = fwd.tapes.front().probs;  // row 0: start 0, first step

  constexpr int kDraws = 100000;
  std::array<int, 4> counts{};
  DecodeOptions opts;
  opts.mode = DecodeMode::kSample;
  opts.seed = 123;
  for (int k = 0; k < kDraws; ++k) {
    opts.instance_index = static_cast<std::uint64_t>(k);
    const auto tape = decode(model, inst, nodes, graph, fwd.bilinear, opts);
    ++counts[tape.order(0)[1]];
  }
  CHECK(counts[0] == 0);
  for (int j = 1; j < 4; ++j) {
    const double p = probs(0, j);
    const double se = std::sqrt(p * (1 - p) / kDraws);
    CHECK(std::abs(counts[j] / static_cast<double>(kDraws) - p) <= 3 * se + 1e-12);
  }
}
