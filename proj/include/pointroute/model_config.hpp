#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace pointroute {

// How the per-node angular feature is computed from (x, y).
enum class AngleFeature {
  kAtan2,  // atan2(y, x); 0 at the origin
  kAtanh,  // atanh(y / x) with the ratio clamped inside (-1, 1)
};

struct ModelConfig {
  int d = 128;            // embedding width
  int layers = 6;         // reversible encoder layers
  int heads = 8;          // self-attention heads
  int pointers = 8;       // pointer projections
  int pointer_dim = 128;  // width of each pointer projection
  double clip = 50.0;     // tanh clipping constant
  AngleFeature angle = AngleFeature::kAtan2;

  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
std::string describe(const ModelConfig& config);

}  // namespace pointroute
