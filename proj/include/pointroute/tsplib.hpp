#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pointroute/instance.hpp"

namespace pointroute {

enum class EdgeWeightType { kEuc2d };

struct TsplibMeta {
  std::string name;
  std::size_t dimension = 0;
  EdgeWeightType edge_weight_type = EdgeWeightType::kEuc2d;
  std::optional<std::string> comment;
};

struct TsplibProblem {
  Instance instance;  // original coordinate frame
  TsplibMeta meta;
  std::vector<std::string> warnings;
};

// Parses a NODE_COORD_SECTION file. Only EUC_2D is accepted.
TsplibProblem parse_tsplib(std::string_view text);
TsplibProblem read_tsplib(const std::filesystem::path& path);

// TSPLIB nint(): nearest integer, halves rounded away from zero.
std::int64_t rounded_distance(const Point& a, const Point& b);

std::int64_t tsplib_tour_length(const Instance& instance,
                                std::span<const int> order);

// TSPLIB .tour text with 1-based indices, terminated by -1.
std::string write_tour(const TsplibMeta& meta, std::span<const int> order);

// Reads the TOUR_SECTION of a .tour file back to 0-based indices.
std::vector<int> parse_tour(std::string_view text);

}  // namespace pointroute
