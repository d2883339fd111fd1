#include "pointroute/model_config.hpp"

#include <cmath>

#include "pointroute/errors.hpp"

namespace pointroute {

void ModelConfig::validate() const {
  if (d <= 0) throw ConfigError("d", "must be positive");
  if (layers <= 0) throw ConfigError("n_t", "must be positive");
  if (heads <= 0) throw ConfigError("heads", "must be positive");
  if (d % heads != 0) {
    throw ConfigError("heads", "d=" + std::to_string(d) +
                                   " is not divisible by heads=" +
                                   std::to_string(heads));
  }
  if (pointers <= 0) throw ConfigError("H", "must be positive");
  if (pointer_dim <= 0) throw ConfigError("d_k", "must be positive");
  if (!(clip > 0.0) || !std::isfinite(clip)) {
    throw ConfigError("C", "must be a positive finite number");
  }
}

nlohmann::json to_json(const ModelConfig& config) {
  return {{"d", config.d},
          {"n_t", config.layers},
          {"heads", config.heads},
          {"H", config.pointers},
          {"d_k", config.pointer_dim},
          {"C", config.clip},
          {"angle", config.angle == AngleFeature::kAtan2 ? "atan2" : "atanh"}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto field = [&](const char* key, auto& out) {
    if (!j.contains(key)) throw ConfigError(key, "missing from model config");
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    }
  };
  field("d", c.d);
  field("n_t", c.layers);
  field("heads", c.heads);
  field("H", c.pointers);
  field("d_k", c.pointer_dim);
  field("C", c.clip);
  const std::string angle = j.value("angle", std::string("atan2"));
  if (angle == "atan2") {
    c.angle = AngleFeature::kAtan2;
  } else if (angle == "atanh") {
    c.angle = AngleFeature::kAtanh;
  } else {
    throw ConfigError("angle", "expected atan2 or atanh, got '" + angle + "'");
  }
  c.validate();
  return c;
}

std::string describe(const ModelConfig& config) {
  return to_json(config).dump();
}

}  // namespace pointroute
