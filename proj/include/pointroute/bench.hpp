#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pointroute/instance.hpp"
#include "pointroute/rollout.hpp"
#include "pointroute/tsplib.hpp"

namespace pointroute {

// JSON-lines datasets: one {"name", "coords"} object per line.
void write_dataset(const std::filesystem::path& path, std::span<const Instance> instances);
std::vector<Instance> read_dataset(const std::filesystem::path& path);

inline constexpr std::string_view kReportHeader = "dataset,method,mean_len,gap_pct,wallclock_s";

struct BenchRow {
  std::string dataset;
  std::string method;
  double mean_len = 0.0;
  std::optional<double> gap_pct;  // empty when no optimum is known
  double wallclock_s = 0.0;
};

void write_report(std::ostream& out, std::span<const BenchRow> rows);

struct OptSource {
  enum class Kind { kNone, kHeldKarp, kFile };
  Kind kind = Kind::kNone;
  std::filesystem::path file;
};

// "none", "hk" or "file:<path>".
OptSource parse_opt_source(std::string_view text);

// One optimum per instance in dataset order; empty for kNone. Files hold one
// value per line, either "<value>" in dataset order or "<name> <value>".
std::vector<double> resolve_optima(const OptSource& source,
                                   std::span<const Instance> instances);

// Name -> optimum map from a "<name> <value>" file.
std::map<std::string, double> read_named_optima(const std::filesystem::path& path);

// Normalizes (unless already in the unit square), runs the multi-start
// decode and returns the best tour on the original coordinates.
Tour solve_instance(const PolicyModel& model, const Instance& instance,
                    DecodeMode mode = DecodeMode::kGreedy,
                    std::optional<std::uint64_t> seed = std::nullopt);

inline constexpr std::string_view kMethodModel = "model";
inline constexpr std::string_view kMethodNearest = "nn";
inline constexpr std::string_view kMethodNearestTwoOpt = "nn+2opt";

struct EvalOptions {
  OptSource opt;
  bool baselines = false;
  DecodeMode mode = DecodeMode::kGreedy;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

struct MethodTours {
  std::string method;
  std::vector<Tour> tours;  // dataset order
  double wallclock_s = 0.0;
};

struct EvalReport {
  std::vector<BenchRow> rows;
  std::vector<MethodTours> methods;
  std::vector<double> optima;  // empty without an optimum source
};

// Rows for the model (when given) and, if requested, the nearest-neighbor
// baselines. gap_pct is the mean of the per-instance gaps.
EvalReport evaluate_dataset(const PolicyModel* model, const std::string& dataset,
                            std::span<const Instance> instances, const EvalOptions& options);

// Size bands used for TSPLIB reporting: 1-100, 101-500, 501-1002.
std::string tsplib_group(std::size_t n);

// Per size band and method: mean rounded length and mean per-instance gap.
// Problems without a known optimum are reported without a gap.
std::vector<BenchRow> evaluate_tsplib(const PolicyModel* model,
                                      std::span<const TsplibProblem> problems,
                                      const std::map<std::string, double>& optima,
                                      bool baselines, std::size_t workers = 1);

// Tour coordinate sequences (closed) for external plotting.
nlohmann::json plot_data(std::span<const Instance> instances,
                         std::span<const MethodTours> methods);

}  // namespace pointroute
