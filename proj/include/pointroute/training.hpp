#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pointroute/instance.hpp"
#include "pointroute/param_store.hpp"
#include "pointroute/rollout.hpp"

namespace pointroute {

// What the centred rewards are divided by.
enum class SpreadMode {
  kStdDev,    // sqrt of the mean squared deviation (default)
  kVariance,  // the mean squared deviation itself
};

inline constexpr double kSpreadFloor = 1e-8;

struct AdvantageStats {
  double mean = 0.0;
  double spread = 0.0;  // after the floor
  std::vector<double> advantages;
};

// (reward - mean) / spread over the N trajectories of one instance. All-equal
// rewards give exactly zero advantages. Throws ParameterError for N < 2.
AdvantageStats normalized_advantages(std::span<const double> rewards,
                                     SpreadMode mode = SpreadMode::kStdDev);

// Loss -1/(B N) sum_i sum_j adv_ij * log p(tour_ij) with the advantages held
// constant, together with its derivative w.r.t. each trajectory log-prob.
struct ReinforceTerms {
  double loss = 0.0;
  std::vector<AdvantageStats> stats;           // per instance
  std::vector<std::vector<double>> weights;    // dL / dlog p, [instance][start]
};

ReinforceTerms reinforce_terms(const RolloutBatch& batch,
                               SpreadMode mode = SpreadMode::kStdDev);
double reinforce_loss(const RolloutBatch& batch, SpreadMode mode = SpreadMode::kStdDev);

// Scales `grads` so its global L2 norm is at most max_norm; returns the norm
// before clipping.
double clip_grad_norm(Gradients& grads, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;  // decoupled, applied as lr * wd * theta
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig config);

  // Throws NumericError naming the parameter when a gradient is not finite;
  // nothing is updated in that case.
  void step(ParamStore& params, const Gradients& grads);

  std::int64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

  void save(const std::filesystem::path& manifest, nlohmann::json extra = {}) const;
  // Returns the manifest so callers can read back `extra`.
  nlohmann::json load(const std::filesystem::path& manifest, const ParamStore& params);

 private:
  AdamConfig config_;
  ParamStore first_;
  ParamStore second_;
  std::int64_t steps_ = 0;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t instances_per_epoch = 100000;
  std::size_t epochs = 1;
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;
  std::size_t n = 20;
  std::uint64_t seed = 1;
  double max_grad_norm = 1.0;
  SpreadMode spread = SpreadMode::kStdDev;
  std::size_t checkpoint_every = 0;  // batches; 0 = end of each epoch only
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  std::size_t workers = 1;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct BatchMetrics {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double mean_len = 0.0;  // over all B x N sampled tours
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double wallclock_s = 0.0;  // since the run started
};

class TrainSink {
 public:
  virtual ~TrainSink() = default;
  virtual void on_batch(const BatchMetrics&) {}
  // Called once per batch with the advantages that weighted it.
  virtual void on_advantages(std::span<const Instance>, std::span<const AdvantageStats>) {}
};

// Writes "epoch,batch,mean_len,loss,grad_norm,wallclock_s" rows.
class CsvSink : public TrainSink {
 public:
  explicit CsvSink(std::ostream& out, bool header = true);
  void on_batch(const BatchMetrics& m) override;

 private:
  std::ostream& out_;
};

struct BatchResult {
  double loss = 0.0;
  double mean_len = 0.0;
  double grad_norm = 0.0;
  std::vector<AdvantageStats> stats;
};

class Trainer {
 public:
  Trainer(TrainConfig config, PolicyModel model);

  // Restores model, optimizer and position from checkpoint_dir.
  static Trainer resume(TrainConfig config);

  // Trains from the current position to the end of the last epoch.
  void run(TrainSink* sink = nullptr);

  // One sampled rollout + gradient step on `instances`. `first_index` keys
  // the sampling streams.
  BatchResult train_batch(std::span<const Instance> instances, std::uint64_t sample_seed,
                          std::uint64_t first_index);

  // The epoch's training instances (regenerated deterministically).
  std::vector<Instance> epoch_instances(std::size_t epoch) const;

  void save_state(const std::filesystem::path& dir) const;

  const PolicyModel& model() const noexcept { return model_; }
  PolicyModel& model() noexcept { return model_; }
  const Adam& optimizer() const noexcept { return adam_; }
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t next_batch() const noexcept { return next_batch_; }

  static std::filesystem::path model_path(const std::filesystem::path& dir);
  static std::filesystem::path optimizer_path(const std::filesystem::path& dir);

 private:
  std::size_t batches_per_epoch() const;

  TrainConfig config_;
  PolicyModel model_;
  Adam adam_;
  std::size_t epoch_ = 0;
  std::size_t next_batch_ = 0;
};

PolicyModel train(const TrainConfig& config, PolicyModel model, TrainSink* sink = nullptr);

}  // namespace pointroute
