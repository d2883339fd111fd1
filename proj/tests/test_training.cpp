#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pointroute/errors.hpp"
#include "pointroute/run_config.hpp"
#include "pointroute/training.hpp"
#include "support/reinforce_fixture.hpp"

using namespace pointroute;
namespace fs = std::filesystem;

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

TrainConfig small_run() {
  TrainConfig t;
  t.batch_size = 16;
  t.instances_per_epoch = 64;
  t.epochs = 1;
  t.n = 10;
  t.seed = 5;
  t.learning_rate = 1e-3;
  return t;
}

struct Recorder : TrainSink {
  std::vector<BatchMetrics> rows;
  std::vector<AdvantageStats> stats;
  void on_batch(const BatchMetrics& m) override { rows.push_back(m); }
  void on_advantages(std::span<const Instance>, std::span<const AdvantageStats> s) override {
    stats.insert(stats.end(), s.begin(), s.end());
  }
  std::vector<double> losses() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.loss);
    return out;
  }
};

double held_out_length(const PolicyModel& model, const std::vector<Instance>& insts) {
  double total = 0.0;
  for (const auto& inst : insts) {
    total += best_of(inst, multi_start_rollout(model, inst, DecodeMode::kGreedy)).length();
  }
  return total / static_cast<double>(insts.size());
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pointroute_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("advantages of two rewards") {
  const auto a = normalized_advantages(std::vector<double>{-3.0, -5.0});
  CHECK(a.mean == -4.0);
  CHECK(a.advantages == std::vector<double>{1.0, -1.0});
  CHECK_THROWS_AS(normalized_advantages(std::vector<double>{-1.0}), ParameterError);
}

TEST_CASE("equal rewards give zero advantages") {
  const auto a = normalized_advantages(std::vector<double>(7, -0.1));
  for (double v : a.advantages) CHECK(v == 0.0);
  CHECK(a.spread == kSpreadFloor);
}

TEST_CASE("advantage moments") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(-5.0, 2.0);
  std::vector<double> r(20);
  for (auto& v : r) v = dist(rng);
  const auto a = normalized_advantages(r);
  double mean = 0.0;
  for (double v : a.advantages) mean += v / 20.0;
  double var = 0.0;
  for (double v : a.advantages) var += (v - mean) * (v - mean) / 20.0;
  CHECK(std::abs(mean) <= 1e-10);
  CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-6);

  // Variance mode divides by the squared spread instead.
  const auto v = normalized_advantages(r, SpreadMode::kVariance);
  CHECK(v.spread == doctest::Approx(a.spread * a.spread));
  CHECK(v.advantages[3] == doctest::Approx(a.advantages[3] / a.spread));
}

TEST_CASE("advantages are invariant to instance scale") {
  const auto inst = generate_instances(3, 12, 1).front();
  std::mt19937_64 rng(2);
  std::vector<std::vector<int>> orders;
  for (int k = 0; k < 12; ++k) {
    std::vector<int> o(12);
    std::iota(o.begin(), o.end(), 0);
    std::shuffle(o.begin(), o.end(), rng);
    orders.push_back(o);
  }
  for (double k : {0.01, 3.0, 250.0}) {
    std::vector<Point> scaled;
    for (const auto& p : inst.coords()) scaled.push_back({p.x * k, p.y * k});
    const Instance big(scaled);
    std::vector<double> base_r;
    std::vector<double> scaled_r;
    for (const auto& o : orders) {
      base_r.push_back(-tour_length(inst, o));
      scaled_r.push_back(-tour_length(big, o));
      CHECK(scaled_r.back() == doctest::Approx(k * base_r.back()).epsilon(1e-12));
    }
    const auto a = normalized_advantages(base_r);
    const auto b = normalized_advantages(scaled_r);
    for (std::size_t j = 0; j < orders.size(); ++j) {
      CHECK(std::abs(a.advantages[j] - b.advantages[j]) <= 1e-6);
    }
  }
}

TEST_CASE("reinforce loss") {
  RolloutBatch batch;
  Trajectory a;
  a.reward = -3.0;
  a.step_log_probs = {-0.5, -0.2};
  Trajectory b = a;
  b.reward = -5.0;
  batch.trajectories = {{a, b}};
  CHECK(reinforce_loss(batch) == doctest::Approx(0.0));
  const auto terms = reinforce_terms(batch);
  CHECK(terms.weights[0] == std::vector<double>{-0.5, 0.5});

  b.step_log_probs = {-1.0, -1.0};
  batch.trajectories = {{a, b}};
  // -(1/2) (1 * -0.7 + (-1) * -2.0)
  CHECK(reinforce_loss(batch) == doctest::Approx(-0.65));

  // Permuting instances leaves the loss alone.
  Trajectory c = a;
  c.reward = -1.0;
  c.step_log_probs = {-2.0, -0.1};
  RolloutBatch two;
  two.trajectories = {{a, b}, {c, a}};
  RolloutBatch swapped;
  swapped.trajectories = {{c, a}, {a, b}};
  CHECK(reinforce_loss(two) == doctest::Approx(reinforce_loss(swapped)).epsilon(1e-15));
}

TEST_CASE("zero advantages give zero gradients") {
  // Every tour of a triangle has the same length.
  const auto policy = Policy<double>::random(tiny(), 1);
  std::vector<Instance> insts{Instance({{0.1, 0.1}, {0.9, 0.2}, {0.4, 0.8}})};
  const auto f = fixture::freeze(policy, insts, 3);
  for (double w : f.weights[0]) CHECK(w == 0.0);
  const auto params = fixture::with_gradient(f, policy);
  CHECK(params.grads().squared_norm() == 0.0);
  CHECK(fixture::loss(f, params) == 0.0);
}

TEST_CASE("reinforce gradient matches finite differences") {
  ModelConfig c;
  c.d = 8;
  c.layers = 2;
  c.heads = 2;
  c.pointers = 2;
  c.pointer_dim = 4;
  const auto policy = Policy<double>::random(c, 7);
  const auto f = fixture::freeze(policy, generate_instances(11, 6, 2), 13);
  const auto r = fixture::check(policy, f, 200, 17);
  CHECK(r.coordinates == 200);
  CHECK(r.max_relative_error <= 1e-3);
}

TEST_CASE("gradient clipping") {
  Gradients g;
  g.append(Matrix<double>::Constant(2, 2, 3.0));  // norm 6
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(6.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  CHECK(clip_grad_norm(g, 5.0) == doctest::Approx(1.0));
  CHECK(g[0](0, 0) == doctest::Approx(0.5));
}

TEST_CASE("adam with zero gradients and no decay keeps parameters") {
  ParamStore p;
  p.add("w", Matrix<float>::Constant(3, 3, 0.7f));
  Adam adam(p, {1e-2, 0.0});
  for (int i = 0; i < 10; ++i) adam.step(p, p.make_gradients());
  CHECK(p.value(0).isConstant(0.7f));
}

TEST_CASE("adam descends") {
  ParamStore p;
  p.add("w", Matrix<float>::Constant(1, 1, 0.0f));
  Adam adam(p, {1e-3, 0.0});
  Gradients g = p.make_gradients();
  g[0](0, 0) = 2.5;
  for (int i = 0; i < 50; ++i) adam.step(p, g);
  CHECK(p.value(0)(0, 0) < 0.0f);
  CHECK(adam.steps() == 50);
}

TEST_CASE("adam converges on a quadratic bowl") {
  ParamStore p;
  p.add("theta", Matrix<float>::Constant(1, 1, 1.0f));
  Adam adam(p, {1e-2, 0.0});
  for (int i = 0; i < 500; ++i) {
    Gradients g = p.make_gradients();
    g[0](0, 0) = 2.0 * p.value(0)(0, 0);
    adam.step(p, g);
  }
  CHECK(std::abs(p.value(0)(0, 0)) < 1e-3);
}

TEST_CASE("adam refuses non-finite gradients") {
  ParamStore p;
  p.add("layer.a", Matrix<float>::Ones(2, 2));
  p.add("layer.b", Matrix<float>::Ones(2, 2));
  Adam adam(p, {});
  Gradients g = p.make_gradients();
  g[0](0, 0) = 1.0;
  g[1](1, 1) = std::numeric_limits<double>::infinity();
  try {
    adam.step(p, g);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.b") != std::string::npos);
  }
  CHECK(p.value(0).isOnes());
  CHECK(adam.steps() == 0);
}

TEST_CASE("adam state survives a save and load") {
  const auto dir = temp_dir("adam_state");
  fs::create_directories(dir);
  ParamStore p;
  p.add("w", Matrix<float>::Constant(2, 2, 0.3f));
  Adam adam(p, {1e-2, 1e-3});
  Gradients g = p.make_gradients();
  g[0].setConstant(0.4);
  for (int i = 0; i < 3; ++i) adam.step(p, g);
  adam.save(dir / "opt.json", {{"tag", 7}});

  ParamStore q = p;
  Adam restored(q, {1e-2, 1e-3});
  const auto manifest = restored.load(dir / "opt.json", q);
  CHECK(manifest.at("extra").at("tag") == 7);
  CHECK(restored.steps() == 3);
  adam.step(p, g);
  restored.step(q, g);
  CHECK(p.value(0) == q.value(0));
}

TEST_CASE("train config validation names the field") {
  const auto field_of = [](TrainConfig t) {
    try {
      t.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  TrainConfig t;
  CHECK(field_of(t) == "none");
  t.learning_rate = 0.0;
  CHECK(field_of(t) == "learning_rate");
  t = {};
  t.learning_rate = 1.0;
  CHECK(field_of(t) == "learning_rate");
  t = {};
  t.batch_size = 0;
  CHECK(field_of(t) == "batch_size");
  t = {};
  t.n = 1;
  CHECK(field_of(t) == "n");
  t = {};
  t.weight_decay = -1.0;
  CHECK(field_of(t) == "weight_decay");
}

TEST_CASE("a short training run completes and does not regress") {
  auto model = PolicyModel::random(tiny(), 3);
  model.zero_pointer_projections();
  const auto held = generate_instances(404, 10, 32);
  const double before = held_out_length(model, held);
  Recorder rec;
  const auto trained = train(small_run(), model, &rec);
  CHECK(rec.rows.size() == 4);
  CHECK(held_out_length(trained, held) <= 1.05 * before);
  for (const auto& s : rec.stats) {
    double sum = 0.0;
    for (double a : s.advantages) sum += a;
    CHECK(std::abs(sum) <= 1e-6 * static_cast<double>(s.advantages.size()));
  }
}

TEST_CASE("training is deterministic for a seed") {
  const auto model = PolicyModel::random(tiny(), 4);
  Recorder a;
  Recorder b;
  train(small_run(), model, &a);
  train(small_run(), model, &b);
  CHECK(a.losses() == b.losses());
  auto other = small_run();
  other.seed = 6;
  Recorder c;
  train(other, model, &c);
  CHECK(a.losses() != c.losses());
}

TEST_CASE("resuming continues the same loss sequence") {
  const auto model = PolicyModel::random(tiny(), 5);
  auto config = small_run();
  config.epochs = 2;
  Recorder full;
  train(config, model, &full);
  REQUIRE(full.rows.size() == 8);

  // Stop after the first epoch, then resume for the second.
  const auto dir = temp_dir("resume_epoch");
  auto first = config;
  first.epochs = 1;
  first.checkpoint_dir = dir;
  Recorder part;
  train(first, model, &part);
  auto second = config;
  second.checkpoint_dir = dir;
  auto resumed = Trainer::resume(second);
  CHECK(resumed.epoch() == 0);  // epoch 0 finished; the loop moves on
  resumed.run(&part);
  CHECK(part.losses() == full.losses());

  // Mid-epoch checkpoints resume at the next batch.
  const auto mid_dir = temp_dir("resume_mid");
  auto cadence = config;
  cadence.checkpoint_dir = mid_dir;
  cadence.checkpoint_every = 3;
  struct Stop {};
  struct StopAt : TrainSink {
    Recorder rec;
    void on_batch(const BatchMetrics& m) override {
      if (m.batch == 3) throw Stop{};
      rec.on_batch(m);
    }
  } stop;
  Trainer interrupted(cadence, model);
  CHECK_THROWS_AS(interrupted.run(&stop), Stop);
  auto continued = Trainer::resume(cadence);
  CHECK(continued.epoch() == 0);
  CHECK(continued.next_batch() == 3);
  continued.run(&stop.rec);
  CHECK(stop.rec.losses() == full.losses());
}

TEST_CASE("csv sink writes the metrics schema") {
  std::ostringstream out;
  CsvSink sink(out);
  sink.on_batch({1, 2, 3.5, -0.25, 0.75, 9.0});
  CHECK(out.str() == "epoch,batch,mean_len,loss,grad_norm,wallclock_s\n1,2,3.5,-0.25,0.75,9\n");
}

TEST_CASE("run config files") {
  const auto run = parse_run_config(
      "[model]\nd = 64\nn_t = 3\nC = 10\n\n[train]\nbatch_size = 32\nepochs = 2\n"
      "learning_rate = 0.0005\nspread = variance\ncheckpoint_dir = out\nresume = true\n");
  CHECK(run.model.d == 64);
  CHECK(run.model.layers == 3);
  CHECK(run.model.clip == 10.0);
  CHECK(run.train.batch_size == 32);
  CHECK(run.train.learning_rate == doctest::Approx(5e-4));
  CHECK(run.train.spread == SpreadMode::kVariance);
  CHECK(run.resume);

  const auto field_of = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  CHECK(field_of("[train]\nlearning_rate = 0\n") == "learning_rate");
  CHECK(field_of("[train]\nbatch_size = -4\n") == "batch_size");
  CHECK(field_of("[train]\nepochs = many\n") == "epochs");
  CHECK(field_of("[train]\nlr = 0.1\n") == "lr");
  CHECK(field_of("[model]\nd = 100\n") == "heads");
  CHECK(field_of("[optimizer]\nx = 1\n") == "optimizer");
  CHECK(field_of("[train]\nresume = true\n") == "resume");
  CHECK(field_of("[model]\nangle = polar\n") == "angle");
}
