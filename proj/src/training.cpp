#include "pointroute/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "pointroute/checkpoint.hpp"
#include "pointroute/errors.hpp"
#include "pointroute/parallel.hpp"

namespace pointroute {
namespace {

// Distinct stream tags so epoch instances and sampling never share a seed.
constexpr std::uint64_t kInstanceStream = 1;
constexpr std::uint64_t kSampleStream = 2;

}  // namespace

AdvantageStats normalized_advantages(std::span<const double> rewards, SpreadMode mode) {
  if (rewards.size() < 2) {
    throw ParameterError("advantages need at least 2 rewards, got " +
                         std::to_string(rewards.size()));
  }
  const double count = static_cast<double>(rewards.size());
  AdvantageStats out;
  out.advantages.assign(rewards.size(), 0.0);
  double sum = 0.0;
  for (double r : rewards) sum += r;
  out.mean = sum / count;

  const bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                                     [&](double r) { return r == rewards.front(); });
  double squared = 0.0;
  for (double r : rewards) squared += (r - out.mean) * (r - out.mean);
  const double variance = squared / count;
  const double spread = mode == SpreadMode::kStdDev ? std::sqrt(variance) : variance;
  out.spread = std::max(spread, kSpreadFloor);
  if (all_equal) return out;
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    out.advantages[j] = (rewards[j] - out.mean) / out.spread;
  }
  return out;
}

ReinforceTerms reinforce_terms(const RolloutBatch& batch, SpreadMode mode) {
  ReinforceTerms terms;
  std::size_t total = 0;
  for (const auto& trajectories : batch.trajectories) total += trajectories.size();
  if (total == 0) throw ParameterError("empty rollout batch");
  const double scale = 1.0 / static_cast<double>(total);

  for (const auto& trajectories : batch.trajectories) {
    std::vector<double> rewards;
    rewards.reserve(trajectories.size());
    for (const auto& t : trajectories) rewards.push_back(t.reward);
    auto stats = normalized_advantages(rewards, mode);
    std::vector<double> weights(trajectories.size());
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
      weights[j] = -stats.advantages[j] * scale;
      terms.loss += weights[j] * trajectory_log_prob(trajectories[j]);
    }
    terms.stats.push_back(std::move(stats));
    terms.weights.push_back(std::move(weights));
  }
  return terms;
}

double reinforce_loss(const RolloutBatch& batch, SpreadMode mode) {
  return reinforce_terms(batch, mode).loss;
}

double clip_grad_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("max_norm must be positive");
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

Adam::Adam(const ParamStore& params, AdamConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    first_.add(params.name(i), Matrix<float>::Zero(v.rows(), v.cols()));
    second_.add(params.name(i), Matrix<float>::Zero(v.rows(), v.cols()));
  }
}

void Adam::step(ParamStore& params, const Gradients& grads) {
  if (params.size() != first_.size() || grads.size() != first_.size()) {
    throw DimensionError("optimizer state does not match the parameter store");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) {
      throw NumericError("non-finite gradient in '" + params.name(i) + "'");
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double decay = lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params.value(i);
    auto& m = first_.value(i);
    auto& v = second_.value(i);
    const auto& g = grads[i];
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double gk = g.data()[k];
      const double mk = config_.beta1 * m.data()[k] + (1.0 - config_.beta1) * gk;
      const double vk = config_.beta2 * v.data()[k] + (1.0 - config_.beta2) * gk * gk;
      m.data()[k] = static_cast<float>(mk);
      v.data()[k] = static_cast<float>(vk);
      const double theta = value.data()[k];
      const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps);
      value.data()[k] = static_cast<float>(theta - update - decay * theta);
    }
  }
}

void Adam::save(const std::filesystem::path& manifest, nlohmann::json extra) const {
  ParamStore moments;
  for (std::size_t i = 0; i < first_.size(); ++i) {
    moments.add("m." + first_.name(i), first_.value(i));
  }
  for (std::size_t i = 0; i < second_.size(); ++i) {
    moments.add("v." + second_.name(i), second_.value(i));
  }
  nlohmann::json header{{"kind", "adam"},
                        {"steps", steps_},
                        {"learning_rate", config_.learning_rate},
                        {"weight_decay", config_.weight_decay},
                        {"extra", std::move(extra)}};
  save_bundle(manifest, std::move(header), moments);
}

nlohmann::json Adam::load(const std::filesystem::path& manifest, const ParamStore& params) {
  auto bundle = load_bundle(manifest);
  if (bundle.manifest.value("kind", "") != "adam") {
    throw CheckpointError(CheckpointError::Kind::kConfig,
                          manifest.string() + " is not an optimizer state");
  }
  Adam restored(params, config_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto* target : {&restored.first_, &restored.second_}) {
      const std::string name =
          (target == &restored.first_ ? "m." : "v.") + params.name(i);
      if (!bundle.tensors.contains(name)) {
        throw CheckpointError(CheckpointError::Kind::kShape,
                              "optimizer state lacks '" + name + "'");
      }
      const auto& stored = bundle.tensors.value(bundle.tensors.slot(name));
      auto& dst = target->value(i);
      if (stored.rows() != dst.rows() || stored.cols() != dst.cols()) {
        throw CheckpointError(CheckpointError::Kind::kShape,
                              "optimizer tensor '" + name + "' has the wrong shape");
      }
      dst = stored;
    }
  }
  restored.steps_ = bundle.manifest.at("steps").get<std::int64_t>();
  *this = std::move(restored);
  return bundle.manifest;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (instances_per_epoch < 1) throw ConfigError("instances_per_epoch", "must be positive");
  if (epochs < 1) throw ConfigError("epochs", "must be positive");
  if (!(learning_rate > 0.0 && learning_rate < 1.0)) {
    throw ConfigError("learning_rate", "must lie in (0, 1)");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay", "must be finite and non-negative");
  }
  if (n < 2) throw ConfigError("n", "must be at least 2");
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm", "must be positive");
  if (workers < 1) throw ConfigError("workers", "must be positive");
}

CsvSink::CsvSink(std::ostream& out, bool header) : out_(out) {
  if (header) out_ << "epoch,batch,mean_len,loss,grad_norm,wallclock_s\n";
}

void CsvSink::on_batch(const BatchMetrics& m) {
  out_ << m.epoch << ',' << m.batch << ',' << m.mean_len << ',' << m.loss << ','
       << m.grad_norm << ',' << m.wallclock_s << '\n';
  out_.flush();
}

Trainer::Trainer(TrainConfig config, PolicyModel model)
    : config_(std::move(config)),
      model_(std::move(model)),
      adam_(model_.params(), AdamConfig{config_.learning_rate, config_.weight_decay}) {
  config_.validate();
}

std::filesystem::path Trainer::model_path(const std::filesystem::path& dir) {
  return dir / "model.json";
}

std::filesystem::path Trainer::optimizer_path(const std::filesystem::path& dir) {
  return dir / "optimizer.json";
}

Trainer Trainer::resume(TrainConfig config) {
  if (config.checkpoint_dir.empty()) {
    throw ConfigError("checkpoint_dir", "resume needs a checkpoint directory");
  }
  auto ckpt = load_checkpoint(model_path(config.checkpoint_dir));
  const auto dir = config.checkpoint_dir;
  Trainer trainer(std::move(config),
                  PolicyModel::from_params(ckpt.config, std::move(ckpt.params)));
  const auto manifest = trainer.adam_.load(optimizer_path(dir), trainer.model_.params());
  const auto& position = manifest.at("extra");
  trainer.epoch_ = position.at("epoch").get<std::size_t>();
  trainer.next_batch_ = position.at("next_batch").get<std::size_t>();
  return trainer;
}

void Trainer::save_state(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(model_path(dir), model_.config(), model_.params());
  adam_.save(optimizer_path(dir), {{"epoch", epoch_}, {"next_batch", next_batch_}});
}

std::size_t Trainer::batches_per_epoch() const {
  return (config_.instances_per_epoch + config_.batch_size - 1) / config_.batch_size;
}

std::vector<Instance> Trainer::epoch_instances(std::size_t epoch) const {
  return generate_instances(stream_seed(config_.seed, kInstanceStream, epoch), config_.n,
                            config_.instances_per_epoch);
}

BatchResult Trainer::train_batch(std::span<const Instance> instances,
                                 std::uint64_t sample_seed, std::uint64_t first_index) {
  if (instances.empty()) throw ParameterError("empty training batch");
  const std::size_t count = instances.size();
  const std::size_t workers = std::min(config_.workers, count);
  double trajectories = 0.0;
  for (const auto& inst : instances) trajectories += static_cast<double>(inst.size());
  const double scale = 1.0 / trajectories;

  BatchResult result;
  result.stats.resize(count);
  std::vector<Gradients> local(workers);
  std::vector<double> loss_parts(workers, 0.0);
  std::vector<double> length_parts(workers, 0.0);

  parallel_for(count, workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    local[w] = model_.params().make_gradients();
    BatchOptions opts;
    opts.mode = DecodeMode::kSample;
    opts.seed = sample_seed;
    opts.first_instance_index = first_index + begin;
    const auto chunk = instances.subspan(begin, end - begin);
    const auto fwd = forward_batch(model_, chunk, opts);

    std::vector<std::vector<double>> weights(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& tape = fwd.tapes[i];
      std::vector<double> rewards(static_cast<std::size_t>(tape.n));
      for (int s = 0; s < tape.n; ++s) {
        rewards[s] = -tour_length(chunk[i], tape.order(s));
        length_parts[w] -= rewards[s];
      }
      auto stats = normalized_advantages(rewards, config_.spread);
      weights[i].resize(rewards.size());
      for (int s = 0; s < tape.n; ++s) {
        weights[i][s] = -stats.advantages[s] * scale;
        loss_parts[w] += weights[i][s] * tape.log_prob(s);
      }
      result.stats[begin + i] = std::move(stats);
    }
    backward_batch(model_, fwd, weights, local[w]);
  });

  Gradients& total = local.front();
  for (std::size_t w = 1; w < workers; ++w) total += local[w];
  for (std::size_t w = 0; w < workers; ++w) {
    result.loss += loss_parts[w];
    result.mean_len += length_parts[w];
  }
  result.mean_len *= scale;
  result.grad_norm = clip_grad_norm(total, config_.max_grad_norm);
  adam_.step(model_.params(), total);
  return result;
}

void Trainer::run(TrainSink* sink) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t per_epoch = batches_per_epoch();
  for (; epoch_ < config_.epochs; ++epoch_, next_batch_ = 0) {
    if (next_batch_ >= per_epoch) continue;
    const auto instances = epoch_instances(epoch_);
    const std::span<const Instance> all(instances);
    while (next_batch_ < per_epoch) {
      const std::size_t begin = next_batch_ * config_.batch_size;
      const std::size_t size = std::min(config_.batch_size, instances.size() - begin);
      const auto chunk = all.subspan(begin, size);
      const auto seed = stream_seed(config_.seed, kSampleStream, epoch_);
      const auto r = train_batch(chunk, seed, begin);
      if (sink) {
        sink->on_advantages(chunk, r.stats);
        BatchMetrics m;
        m.epoch = epoch_;
        m.batch = next_batch_;
        m.mean_len = r.mean_len;
        m.loss = r.loss;
        m.grad_norm = r.grad_norm;
        m.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      started)
                            .count();
        sink->on_batch(m);
      }
      ++next_batch_;
      if (!config_.checkpoint_dir.empty() && config_.checkpoint_every > 0 &&
          next_batch_ % config_.checkpoint_every == 0 && next_batch_ < per_epoch) {
        save_state(config_.checkpoint_dir);
      }
    }
    if (!config_.checkpoint_dir.empty()) save_state(config_.checkpoint_dir);
  }
}

PolicyModel train(const TrainConfig& config, PolicyModel model, TrainSink* sink) {
  Trainer trainer(config, std::move(model));
  trainer.run(sink);
  return std::move(trainer.model());
}

}  // namespace pointroute
