#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "pointroute/model_config.hpp"
#include "pointroute/param_store.hpp"

namespace pointroute {

inline constexpr int kCheckpointVersion = 1;

// A JSON manifest plus one little-endian float32 blob next to it (same stem,
// ".bin" extension). Manifest layout:
//   {"version": 1, ..., "tensors": [{"name", "shape", "offset", "len"}]}
// with offset and len counted in float32 elements.
struct TensorBundle {
  nlohmann::json manifest;
  ParamStore tensors;
};

std::filesystem::path blob_path_for(const std::filesystem::path& manifest);

void save_bundle(const std::filesystem::path& manifest_path, nlohmann::json header,
                 const ParamStore& tensors);
TensorBundle load_bundle(const std::filesystem::path& manifest_path);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

void save_checkpoint(const std::filesystem::path& manifest_path,
                     const ModelConfig& config, const ParamStore& params);

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

// Fails with CheckpointError::Kind::kConfig when the stored config differs
// from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path,
                           const ModelConfig& expected);

}  // namespace pointroute
