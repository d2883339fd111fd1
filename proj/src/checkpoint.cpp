#include "pointroute/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

static_assert(sizeof(float) == 4);

void write_le_floats(std::ostream& out, const float* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(data[i]);
      char bytes[4];
      for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(bytes, 4);
    }
  }
}

float read_le_float(const char* bytes) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
  }
  return std::bit_cast<float>(bits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  auto blob = manifest;
  blob.replace_extension(".bin");
  return blob;
}

void save_bundle(const std::filesystem::path& manifest_path, nlohmann::json header,
                 const ParamStore& tensors) {
  const auto blob_path = blob_path_for(manifest_path);
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "cannot write " + blob_path.string());
  }
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& v = tensors.value(i);
    const auto len = static_cast<std::size_t>(v.size());
    entries.push_back({{"name", tensors.name(i)},
                       {"shape", {v.rows(), v.cols()}},
                       {"offset", offset},
                       {"len", len}});
    write_le_floats(blob, v.data(), len);
    offset += len;
  }
  if (!blob) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "short write to " + blob_path.string());
  }

  header["version"] = kCheckpointVersion;
  header["tensors"] = std::move(entries);
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "cannot write " + manifest_path.string());
  }
  manifest << header.dump(2) << "\n";
}

TensorBundle load_bundle(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "malformed manifest " + manifest_path.string() + ": " +
                              e.what());
  }
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "checkpoint version " + std::to_string(version) +
                              ", this build reads version " +
                              std::to_string(kCheckpointVersion));
  }
  const std::string blob = read_file(blob_path_for(manifest_path));
  const std::size_t blob_floats = blob.size() / sizeof(float);

  ParamStore tensors;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto len = entry.at("len").get<std::size_t>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
        static_cast<std::size_t>(shape[0] * shape[1]) != len) {
      throw CheckpointError(CheckpointError::Kind::kShape,
                            "tensor '" + name + "' shape does not match len " +
                                std::to_string(len));
    }
    if (offset + len > blob_floats) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            "blob ends before tensor '" + name + "' (needs " +
                                std::to_string(offset + len) + " floats, has " +
                                std::to_string(blob_floats) + ")");
    }
    Matrix<float> value(shape[0], shape[1]);
    const char* src = blob.data() + offset * sizeof(float);
    for (std::size_t i = 0; i < len; ++i) {
      value.data()[i] = read_le_float(src + i * sizeof(float));
    }
    tensors.add(name, std::move(value));
  }
  return {std::move(manifest), std::move(tensors)};
}

void save_checkpoint(const std::filesystem::path& manifest_path,
                     const ModelConfig& config, const ParamStore& params) {
  save_bundle(manifest_path, {{"config", to_json(config)}}, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  auto bundle = load_bundle(manifest_path);
  if (!bundle.manifest.contains("config")) {
    throw CheckpointError(CheckpointError::Kind::kConfig,
                          manifest_path.string() + " has no model config");
  }
  ModelConfig config;
  try {
    config = model_config_from_json(bundle.manifest.at("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::kConfig, e.what());
  }
  return {config, std::move(bundle.tensors)};
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path,
                           const ModelConfig& expected) {
  auto ckpt = load_checkpoint(manifest_path);
  if (!(ckpt.config == expected)) {
    throw CheckpointError(CheckpointError::Kind::kConfig,
                          "checkpoint config " + describe(ckpt.config) +
                              " does not match requested " + describe(expected));
  }
  return ckpt;
}

}  // namespace pointroute
