#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pointroute/baselines.hpp"
#include "pointroute/bench.hpp"
#include "pointroute/checkpoint.hpp"
#include "pointroute/errors.hpp"
#include "pointroute/parallel.hpp"
#include "pointroute/run_config.hpp"
#include "pointroute/training.hpp"
#include "pointroute/tsplib.hpp"

namespace fs = std::filesystem;
using namespace pointroute;

namespace {

DecodeMode parse_mode(const std::string& mode) {
  if (mode == "greedy") return DecodeMode::kGreedy;
  if (mode == "sample") return DecodeMode::kSample;
  throw ConfigError("mode", "expected greedy or sample, got '" + mode + "'");
}

PolicyModel load_model(const fs::path& path) {
  auto ckpt = load_checkpoint(path);
  return PolicyModel::from_params(ckpt.config, std::move(ckpt.params));
}

bool is_tsplib(const fs::path& path) { return path.extension() == ".tsp"; }

std::vector<TsplibProblem> read_tsplib_set(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (is_tsplib(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw Error("no .tsp files in " + path.string());
  std::vector<TsplibProblem> out;
  for (const auto& f : files) {
    auto problem = read_tsplib(f);
    for (const auto& w : problem.warnings) std::cerr << f.string() << ": " << w << "\n";
    out.push_back(std::move(problem));
  }
  return out;
}

int cmd_gen(std::uint64_t seed, std::size_t n, std::size_t count, const fs::path& out) {
  const auto instances = generate_instances(seed, n, count);
  write_dataset(out, instances);
  std::cout << "wrote " << count << " instances of " << n << " nodes to " << out.string()
            << "\n";
  return 0;
}

int cmd_init(const std::optional<fs::path>& config_path, std::uint64_t seed,
             bool zero_pointer, const fs::path& out) {
  ModelConfig config;
  if (config_path) config = load_run_config(*config_path).model;
  auto model = PolicyModel::random(config, seed);
  if (zero_pointer) model.zero_pointer_projections();
  save_checkpoint(out, config, model.params());
  std::cout << "wrote " << describe(config) << " to " << out.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed,
              const std::optional<fs::path>& init) {
  auto run = load_run_config(config_path);
  if (seed) run.train.seed = *seed;
  run.train.workers = std::min(run.train.workers, worker_count());

  std::unique_ptr<Trainer> trainer;
  if (run.resume && fs::exists(Trainer::optimizer_path(run.train.checkpoint_dir))) {
    trainer = std::make_unique<Trainer>(Trainer::resume(run.train));
    std::cout << "resuming at epoch " << trainer->epoch() << " batch "
              << trainer->next_batch() << "\n";
  } else if (init) {
    trainer = std::make_unique<Trainer>(run.train, load_model(*init));
  } else {
    trainer = std::make_unique<Trainer>(run.train,
                                        PolicyModel::random(run.model, run.train.seed));
  }

  std::ofstream metrics_file;
  std::unique_ptr<CsvSink> sink;
  if (!run.metrics.empty()) {
    if (run.metrics.has_parent_path()) fs::create_directories(run.metrics.parent_path());
    const bool append = run.resume && fs::exists(run.metrics);
    metrics_file.open(run.metrics, append ? std::ios::app : std::ios::trunc);
    if (!metrics_file) throw Error("cannot write " + run.metrics.string());
    sink = std::make_unique<CsvSink>(metrics_file, !append);
  }
  trainer->run(sink.get());
  if (!run.train.checkpoint_dir.empty()) {
    std::cout << "checkpoint: " << Trainer::model_path(run.train.checkpoint_dir).string()
              << "\n";
  }
  return 0;
}

int cmd_solve(const fs::path& checkpoint, const fs::path& input, const std::string& mode,
              std::optional<std::uint64_t> seed, const std::optional<fs::path>& out) {
  const auto decode_mode = parse_mode(mode);
  const auto model = load_model(checkpoint);
  TsplibMeta meta;
  Instance instance;
  const bool tsplib = is_tsplib(input);
  if (tsplib) {
    auto problem = read_tsplib(input);
    for (const auto& w : problem.warnings) std::cerr << input.string() << ": " << w << "\n";
    meta = problem.meta;
    instance = std::move(problem.instance);
  } else {
    auto dataset = read_dataset(input);
    if (dataset.size() != 1) {
      throw Error(input.string() + " holds " + std::to_string(dataset.size()) +
                  " instances; solve takes exactly one");
    }
    instance = std::move(dataset.front());
    meta.name = instance.name().empty() ? input.stem().string() : instance.name();
    meta.dimension = instance.size();
  }
  if (decode_mode == DecodeMode::kSample && !seed) seed = 0;
  const Tour tour = solve_instance(model, instance, decode_mode, seed);
  validate_tour(instance, tour.order());
  if (out) {
    std::ofstream file(*out, std::ios::trunc);
    if (!file) throw Error("cannot write " + out->string());
    file << write_tour(meta, tour.order());
  }
  std::cout << meta.name << " length " << std::setprecision(10) << tour.length();
  if (tsplib) std::cout << " rounded " << tsplib_tour_length(instance, tour.order());
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::optional<fs::path>& checkpoint, const fs::path& dataset,
             const std::string& opt, bool baselines, const std::string& mode,
             std::optional<std::uint64_t> seed, const std::optional<fs::path>& out,
             const std::optional<fs::path>& plot) {
  if (!checkpoint && !baselines) {
    throw ConfigError("checkpoint", "eval needs a checkpoint, --baselines, or both");
  }
  const auto source = parse_opt_source(opt);
  std::optional<PolicyModel> model;
  if (checkpoint) model = load_model(*checkpoint);
  const PolicyModel* model_ptr = model ? &*model : nullptr;

  std::vector<BenchRow> rows;
  if (is_tsplib(dataset) || fs::is_directory(dataset)) {
    if (source.kind == OptSource::Kind::kHeldKarp) {
      throw ConfigError("opt", "TSPLIB evaluation takes file:<path> or none");
    }
    if (plot) throw ConfigError("plot", "plot export is available for datasets only");
    const auto problems = read_tsplib_set(dataset);
    std::map<std::string, double> optima;
    if (source.kind == OptSource::Kind::kFile) optima = read_named_optima(source.file);
    rows = evaluate_tsplib(model_ptr, problems, optima, baselines, worker_count());
  } else {
    const auto instances = read_dataset(dataset);
    EvalOptions options;
    options.opt = source;
    options.baselines = baselines;
    options.mode = parse_mode(mode);
    options.seed = seed;
    if (options.mode == DecodeMode::kSample && !options.seed) options.seed = 0;
    options.workers = worker_count();
    const auto report = evaluate_dataset(model_ptr, dataset.stem().string(), instances, options);
    rows = report.rows;
    if (plot) {
      std::ofstream file(*plot, std::ios::trunc);
      if (!file) throw Error("cannot write " + plot->string());
      file << plot_data(instances, report.methods).dump() << "\n";
    }
  }
  if (out) {
    std::ofstream file(*out, std::ios::trunc);
    if (!file) throw Error("cannot write " + out->string());
    write_report(file, rows);
  }
  write_report(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural TSP solver: dataset generation, training, solving and evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::size_t n = 20;
  std::size_t count = 100;
  fs::path out;
  auto* gen = app.add_subcommand("gen", "Write a seeded JSON-lines dataset");
  gen->add_option("--seed", seed, "Root seed");
  gen->add_option("--n", n, "Nodes per instance")->check(CLI::PositiveNumber);
  gen->add_option("--count", count, "Number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--out", out, "Output path")->required();

  std::optional<fs::path> config;
  std::optional<std::uint64_t> opt_seed;
  std::optional<fs::path> checkpoint;
  auto* train = app.add_subcommand("train", "Train a policy from an INI config");
  train->add_option("--config", config, "Run config")->required();
  train->add_option("--seed", opt_seed, "Override the config seed");
  train->add_option("--checkpoint", checkpoint, "Start from this checkpoint");

  bool zero_pointer = false;
  auto* init = app.add_subcommand("init", "Write a freshly initialized checkpoint");
  init->add_option("--config", config, "Take [model] from this run config");
  init->add_option("--seed", seed, "Initialization seed");
  init->add_flag("--zero-pointer", zero_pointer,
                 "Zero the pointer projections (pure nearest-neighbor policy)");
  init->add_option("--out", out, "Checkpoint manifest path")->required();

  std::string mode = "greedy";
  fs::path input;
  std::optional<fs::path> opt_out;
  auto* solve = app.add_subcommand("solve", "Solve one instance and write a .tour file");
  solve->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();
  solve->add_option("instance", input, "TSPLIB .tsp file or one-line JSON dataset")
      ->required();
  solve->add_option("--mode", mode, "greedy or sample");
  solve->add_option("--seed", opt_seed, "Sampling seed");
  solve->add_option("--out", opt_out, "Tour output path");

  std::string opt = "none";
  bool baselines = false;
  std::optional<fs::path> plot;
  auto* eval = app.add_subcommand("eval", "Benchmark a checkpoint and/or baselines");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint manifest");
  eval->add_option("dataset", input, "JSON-lines dataset, .tsp file or directory of .tsp")
      ->required();
  eval->add_option("--opt", opt, "Optimum source: hk, file:<path> or none");
  eval->add_flag("--baselines", baselines, "Also run nearest-neighbor and 2-opt baselines");
  eval->add_option("--mode", mode, "greedy or sample");
  eval->add_option("--seed", opt_seed, "Sampling seed");
  eval->add_option("--out", opt_out, "Report CSV path");
  eval->add_option("--plot", plot, "Write tour coordinates as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(seed, n, count, out);
    if (*init) return cmd_init(config, seed, zero_pointer, out);
    if (*train) return cmd_train(*config, opt_seed, checkpoint);
    if (*solve) return cmd_solve(*checkpoint, input, mode, opt_seed, opt_out);
    if (*eval) {
      return cmd_eval(checkpoint, input, opt, baselines, mode, opt_seed, opt_out, plot);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
