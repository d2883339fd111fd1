#include "pointroute/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

namespace pt = boost::property_tree;

template <typename T>
void read_field(const pt::ptree& section, const std::string& key, T& out) {
  const auto node = section.get_child_optional(key);
  if (!node) return;
  const auto value = node->get_value_optional<T>();
  if (!value) {
    throw ConfigError(key, "cannot parse '" + node->data() + "'");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (node->data().find('-') != std::string::npos) {
      throw ConfigError(key, "must not be negative");
    }
  }
  out = *value;
}

void reject_unknown(const pt::ptree& section, const std::string& name,
                    const std::set<std::string>& known) {
  for (const auto& [key, value] : section) {
    if (!known.count(key)) throw ConfigError(key, "unknown key in [" + name + "]");
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", e.what());
  }
  for (const auto& [name, section] : tree) {
    if (name != "model" && name != "train") {
      throw ConfigError(name, "unknown section");
    }
  }

  RunConfig run;
  const pt::ptree empty;
  const auto& model = tree.get_child("model", empty);
  reject_unknown(model, "model", {"d", "n_t", "heads", "H", "d_k", "C", "angle"});
  read_field(model, "d", run.model.d);
  read_field(model, "n_t", run.model.layers);
  read_field(model, "heads", run.model.heads);
  read_field(model, "H", run.model.pointers);
  read_field(model, "d_k", run.model.pointer_dim);
  read_field(model, "C", run.model.clip);
  std::string angle = "atan2";
  read_field(model, "angle", angle);
  if (angle == "atan2") {
    run.model.angle = AngleFeature::kAtan2;
  } else if (angle == "atanh") {
    run.model.angle = AngleFeature::kAtanh;
  } else {
    throw ConfigError("angle", "expected atan2 or atanh, got '" + angle + "'");
  }

  const auto& train = tree.get_child("train", empty);
  reject_unknown(train, "train",
                 {"batch_size", "instances_per_epoch", "epochs", "learning_rate",
                  "weight_decay", "n", "seed", "max_grad_norm", "spread",
                  "checkpoint_every", "checkpoint_dir", "workers", "metrics", "resume"});
  auto& t = run.train;
  read_field(train, "batch_size", t.batch_size);
  read_field(train, "instances_per_epoch", t.instances_per_epoch);
  read_field(train, "epochs", t.epochs);
  read_field(train, "learning_rate", t.learning_rate);
  read_field(train, "weight_decay", t.weight_decay);
  read_field(train, "n", t.n);
  read_field(train, "seed", t.seed);
  read_field(train, "max_grad_norm", t.max_grad_norm);
  read_field(train, "checkpoint_every", t.checkpoint_every);
  read_field(train, "workers", t.workers);
  std::string spread = "stddev";
  read_field(train, "spread", spread);
  if (spread == "stddev") {
    t.spread = SpreadMode::kStdDev;
  } else if (spread == "variance") {
    t.spread = SpreadMode::kVariance;
  } else {
    throw ConfigError("spread", "expected stddev or variance, got '" + spread + "'");
  }
  std::string path;
  read_field(train, "checkpoint_dir", path);
  t.checkpoint_dir = path;
  path.clear();
  read_field(train, "metrics", path);
  run.metrics = path;
  read_field(train, "resume", run.resume);
  if (run.resume && t.checkpoint_dir.empty()) {
    throw ConfigError("resume", "needs checkpoint_dir");
  }

  run.model.validate();
  t.validate();
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace pointroute
