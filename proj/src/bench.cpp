#include "pointroute/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pointroute/baselines.hpp"
#include "pointroute/errors.hpp"
#include "pointroute/parallel.hpp"

namespace pointroute {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

MethodTours run_method(std::string method, std::span<const Instance> instances,
                       std::size_t workers,
                       const std::function<Tour(const Instance&, std::size_t)>& solve) {
  MethodTours out;
  out.method = std::move(method);
  std::vector<std::optional<Tour>> tours(instances.size());
  const auto start = Clock::now();
  parallel_for(instances.size(), workers,
               [&](std::size_t begin, std::size_t end, std::size_t) {
                 for (std::size_t i = begin; i < end; ++i) tours[i] = solve(instances[i], i);
               });
  out.wallclock_s = seconds_since(start);
  out.tours.reserve(tours.size());
  for (auto& t : tours) out.tours.push_back(std::move(*t));
  return out;
}

double mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

void write_dataset(const std::filesystem::path& path, std::span<const Instance> instances) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write dataset " + path.string());
  for (const auto& instance : instances) out << to_json(instance).dump() << '\n';
  if (!out) throw Error("short write to " + path.string());
}

std::vector<Instance> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, path.string() + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(line_no, path.string() + ": " + e.what());
    }
  }
  if (out.empty()) throw ParseError(line_no, path.string() + ": dataset is empty");
  return out;
}

void write_report(std::ostream& out, std::span<const BenchRow> rows) {
  out << kReportHeader << '\n';
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.mean_len << ',';
    if (r.gap_pct) out << *r.gap_pct;
    out << ',' << r.wallclock_s << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

OptSource parse_opt_source(std::string_view text) {
  if (text == "none") return {};
  if (text == "hk") return {OptSource::Kind::kHeldKarp, {}};
  constexpr std::string_view prefix = "file:";
  if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size()) {
    return {OptSource::Kind::kFile, std::filesystem::path(text.substr(prefix.size()))};
  }
  throw ConfigError("opt", "expected none, hk or file:<path>, got '" + std::string(text) + "'");
}

std::map<std::string, double> read_named_optima(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open optimum file " + path.string());
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string name;
    double value = 0.0;
    if (!(fields >> name)) continue;
    if (!(fields >> value)) {
      throw ParseError(line_no, path.string() + ": expected '<name> <value>'");
    }
    out[name] = value;
  }
  return out;
}

std::vector<double> resolve_optima(const OptSource& source,
                                   std::span<const Instance> instances) {
  std::vector<double> out;
  switch (source.kind) {
    case OptSource::Kind::kNone:
      return out;
    case OptSource::Kind::kHeldKarp:
      for (const auto& instance : instances) out.push_back(held_karp(instance).length());
      return out;
    case OptSource::Kind::kFile:
      break;
  }
  std::ifstream in(source.file);
  if (!in) throw Error("cannot open optimum file " + source.file.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  std::map<std::string, double> named;
  std::vector<double> ordered;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream fields(lines[i]);
    std::string first;
    fields >> first;
    double value = 0.0;
    if (fields >> value) {
      named[first] = value;
    } else {
      try {
        std::size_t used = 0;
        ordered.push_back(std::stod(first, &used));
        if (used != first.size()) throw std::invalid_argument(first);
      } catch (const std::exception&) {
        throw ParseError(i + 1, source.file.string() + ": not a number: " + first);
      }
    }
  }
  if (!named.empty()) {
    for (const auto& instance : instances) {
      const auto it = named.find(instance.name());
      if (it == named.end()) {
        throw Error("no optimum for instance '" + instance.name() + "' in " +
                    source.file.string());
      }
      out.push_back(it->second);
    }
    return out;
  }
  if (ordered.size() != instances.size()) {
    throw Error(source.file.string() + " holds " + std::to_string(ordered.size()) +
                " optima for " + std::to_string(instances.size()) + " instances");
  }
  return ordered;
}

Tour solve_instance(const PolicyModel& model, const Instance& instance, DecodeMode mode,
                    std::optional<std::uint64_t> seed) {
  if (instance.in_unit_square()) {
    return best_of(instance, multi_start_rollout(model, instance, mode, seed));
  }
  const auto normalized = normalize_to_unit_square(instance);
  const auto trajectories = multi_start_rollout(model, normalized.instance, mode, seed);
  const Tour best = best_of(normalized.instance, trajectories);
  return Tour(instance, best.order());
}

EvalReport evaluate_dataset(const PolicyModel* model, const std::string& dataset,
                            std::span<const Instance> instances, const EvalOptions& options) {
  if (instances.empty()) throw ParameterError("empty dataset");
  EvalReport report;
  report.optima = resolve_optima(options.opt, instances);

  if (model) {
    report.methods.push_back(run_method(
        std::string(kMethodModel), instances, options.workers,
        [&](const Instance& instance, std::size_t i) {
          std::optional<std::uint64_t> seed;
          if (options.seed) seed = stream_seed(*options.seed, i, 0);
          return solve_instance(*model, instance, options.mode, seed);
        }));
  }
  if (options.baselines) {
    report.methods.push_back(run_method(std::string(kMethodNearest), instances,
                                        options.workers,
                                        [](const Instance& instance, std::size_t) {
                                          return nearest_neighbor_best(instance);
                                        }));
    report.methods.push_back(run_method(std::string(kMethodNearestTwoOpt), instances,
                                        options.workers,
                                        [](const Instance& instance, std::size_t) {
                                          return nearest_neighbor_two_opt_best(instance);
                                        }));
  }

  for (const auto& method : report.methods) {
    BenchRow row;
    row.dataset = dataset;
    row.method = method.method;
    row.wallclock_s = method.wallclock_s;
    std::vector<double> lengths;
    std::vector<double> gaps;
    for (std::size_t i = 0; i < method.tours.size(); ++i) {
      lengths.push_back(method.tours[i].length());
      if (!report.optima.empty()) {
        gaps.push_back(optimality_gap(method.tours[i].length(), report.optima[i]));
      }
    }
    row.mean_len = mean(lengths);
    if (!gaps.empty()) row.gap_pct = mean(gaps);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string tsplib_group(std::size_t n) {
  if (n >= 1 && n <= 100) return "TSPLIB1-100";
  if (n >= 101 && n <= 500) return "TSPLIB101-500";
  if (n >= 501 && n <= 1002) return "TSPLIB501-1002";
  throw ParameterError("no TSPLIB size band for " + std::to_string(n) + " nodes");
}

std::vector<BenchRow> evaluate_tsplib(const PolicyModel* model,
                                      std::span<const TsplibProblem> problems,
                                      const std::map<std::string, double>& optima,
                                      bool baselines, std::size_t workers) {
  const std::vector<std::string> groups{"TSPLIB1-100", "TSPLIB101-500", "TSPLIB501-1002"};
  std::vector<std::string> methods;
  if (model) methods.emplace_back(kMethodModel);
  if (baselines) {
    methods.emplace_back(kMethodNearest);
    methods.emplace_back(kMethodNearestTwoOpt);
  }

  std::vector<BenchRow> rows;
  for (const auto& group : groups) {
    std::vector<Instance> members;
    std::vector<std::optional<double>> opt;
    for (const auto& p : problems) {
      if (tsplib_group(p.instance.size()) != group) continue;
      members.push_back(p.instance);
      const auto it = optima.find(p.meta.name);
      opt.push_back(it == optima.end() ? std::nullopt : std::optional<double>(it->second));
    }
    if (members.empty()) continue;
    for (const auto& method : methods) {
      const auto result = run_method(
          method, members, workers, [&](const Instance& instance, std::size_t) {
            if (method == kMethodModel) return solve_instance(*model, instance);
            if (method == kMethodNearest) return nearest_neighbor_best(instance);
            return nearest_neighbor_two_opt_best(instance);
          });
      std::vector<double> lengths;
      std::vector<double> gaps;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const auto rounded = static_cast<double>(
            tsplib_tour_length(members[i], result.tours[i].order()));
        lengths.push_back(rounded);
        if (opt[i]) gaps.push_back(optimality_gap(rounded, *opt[i]));
      }
      BenchRow row{group, method, mean(lengths), std::nullopt, result.wallclock_s};
      if (!gaps.empty()) row.gap_pct = mean(gaps);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

nlohmann::json plot_data(std::span<const Instance> instances,
                         std::span<const MethodTours> methods) {
  nlohmann::json tours = nlohmann::json::array();
  for (const auto& method : methods) {
    for (std::size_t i = 0; i < method.tours.size(); ++i) {
      nlohmann::json coords = nlohmann::json::array();
      const auto& order = method.tours[i].order();
      for (int node : order) coords.push_back({instances[i][node].x, instances[i][node].y});
      coords.push_back({instances[i][order.front()].x, instances[i][order.front()].y});
      tours.push_back({{"instance", instances[i].name()},
                       {"method", method.method},
                       {"length", method.tours[i].length()},
                       {"coords", std::move(coords)}});
    }
  }
  return {{"tours", std::move(tours)}};
}

}  // namespace pointroute
