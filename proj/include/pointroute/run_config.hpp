#pragma once

#include <filesystem>
#include <string_view>

#include "pointroute/model_config.hpp"
#include "pointroute/training.hpp"

namespace pointroute {

// A training run described by one INI file:
//
//   [model]  d, n_t, heads, H, d_k, C, angle (atan2 | atanh)
//   [train]  batch_size, instances_per_epoch, epochs, learning_rate,
//            weight_decay, n, seed, max_grad_norm, spread (stddev | variance),
//            checkpoint_every, checkpoint_dir, workers, metrics, resume
//
// Omitted keys keep their defaults; unknown sections or keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path metrics;  // CSV path; empty = no metrics file
  bool resume = false;
};

// Both parsers validate everything and throw ConfigError naming the field.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pointroute
