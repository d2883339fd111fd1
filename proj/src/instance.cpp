#include "pointroute/instance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pointroute/errors.hpp"

namespace pointroute {

double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Instance::Instance(std::vector<Point> coords, std::string name)
    : coords_(std::move(coords)), name_(std::move(name)) {
  if (coords_.size() < 2) {
    throw ParameterError("instance needs at least 2 nodes, got " +
                         std::to_string(coords_.size()));
  }
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    if (!std::isfinite(coords_[i].x) || !std::isfinite(coords_[i].y)) {
      throw ParameterError("non-finite coordinate at node " +
                           std::to_string(i));
    }
  }
}

bool Instance::in_unit_square() const {
  return std::all_of(coords_.begin(), coords_.end(), [](const Point& p) {
    return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
  });
}

void validate_tour(std::size_t n, std::span<const int> order) {
  std::vector<char> seen(n, 0);
  for (const int v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= n) {
      throw TourError(TourError::Kind::kOutOfRange,
                      static_cast<std::size_t>(v < 0 ? 0 : v),
                      "tour index " + std::to_string(v) + " out of range [0," +
                          std::to_string(n) + ")");
    }
    if (seen[v]) {
      throw TourError(TourError::Kind::kDuplicate, static_cast<std::size_t>(v),
                      "tour visits node " + std::to_string(v) + " twice");
    }
    seen[v] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      throw TourError(TourError::Kind::kMissing, i,
                      "tour is missing node " + std::to_string(i));
    }
  }
}

double tour_length(const Instance& instance, std::span<const int> order) {
  validate_tour(instance, order);
  // Summing in canonical order makes rotations and reversals bit-identical.
  const auto canonical = canonical_order(order);
  order = canonical;
  const std::size_t n = order.size();
  double total = instance.cost(order[n - 1], order[0]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    total += instance.cost(order[i], order[i + 1]);
  }
  return total;
}

Tour::Tour(const Instance& instance, std::vector<int> order)
    : order_(std::move(order)), length_(tour_length(instance, order_)) {}

std::vector<int> canonical_order(std::span<const int> order) {
  const std::size_t n = order.size();
  if (n == 0) return {};
  const auto front = std::min_element(order.begin(), order.end());
  const std::size_t k = static_cast<std::size_t>(front - order.begin());
  std::vector<int> forward(n), backward(n);
  for (std::size_t i = 0; i < n; ++i) {
    forward[i] = order[(k + i) % n];
    backward[i] = order[(k + n - i) % n];
  }
  return std::min(forward, backward);
}

Point apply_symmetry(std::size_t which, const Point& p) {
  const double x = p.x;
  const double y = p.y;
  switch (which) {
    case 0: return {x, y};
    case 1: return {y, x};
    case 2: return {x, 1.0 - y};
    case 3: return {y, 1.0 - x};
    case 4: return {1.0 - x, y};
    case 5: return {1.0 - y, x};
    case 6: return {1.0 - x, 1.0 - y};
    case 7: return {1.0 - y, 1.0 - x};
    default:
      throw ParameterError("symmetry index " + std::to_string(which) +
                           " outside 0..7");
  }
}

std::array<Point, kSymmetryCount> apply_symmetries(const Point& p) {
  std::array<Point, kSymmetryCount> out;
  for (std::size_t k = 0; k < kSymmetryCount; ++k) out[k] = apply_symmetry(k, p);
  return out;
}

Instance transform_instance(const Instance& instance, std::size_t which) {
  std::vector<Point> coords;
  coords.reserve(instance.size());
  for (const auto& p : instance.coords()) {
    coords.push_back(apply_symmetry(which, p));
  }
  return Instance(std::move(coords), instance.name());
}

std::vector<Instance> generate_instances(std::uint64_t seed, std::size_t n,
                                         std::size_t count) {
  if (n < 2) {
    throw ParameterError("instances need n >= 2, got " + std::to_string(n));
  }
  if (count < 1) throw ParameterError("count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Instance> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<Point> coords(n);
    for (auto& p : coords) {
      p.x = unit(rng);
      p.y = unit(rng);
    }
    out.emplace_back(std::move(coords), "rand" + std::to_string(n) + "_" +
                                            std::to_string(k));
  }
  return out;
}

Normalized normalize_to_unit_square(const Instance& instance) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const auto& p : instance.coords()) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  const double extent = std::max(max_x - min_x, max_y - min_y);
  if (!(extent > 0.0)) {
    throw DegenerateInstanceError("all nodes of instance '" + instance.name() +
                                  "' coincide");
  }

  const Point offset{min_x, min_y};
  const double scale = extent;
  std::vector<Point> coords;
  coords.reserve(instance.size());
  for (const auto& p : instance.coords()) {
    coords.push_back({std::clamp((p.x - offset.x) / scale, 0.0, 1.0),
                      std::clamp((p.y - offset.y) / scale, 0.0, 1.0)});
  }
  Normalized out{Instance(std::move(coords), instance.name()), offset, scale};
  out.instance.set_source_frame({offset, scale});
  return out;
}

double optimality_gap(double length, double opt) {
  if (!(opt > 0.0)) {
    throw ParameterError("optimality gap needs opt > 0, got " +
                         std::to_string(opt));
  }
  return 100.0 * (length - opt) / opt;
}

nlohmann::json to_json(const Instance& instance) {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& p : instance.coords()) coords.push_back({p.x, p.y});
  return {{"name", instance.name()}, {"coords", std::move(coords)}};
}

Instance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("coords")) {
    throw ParameterError("instance JSON needs a \"coords\" array");
  }
  std::vector<Point> coords;
  for (const auto& c : j.at("coords")) {
    if (!c.is_array() || c.size() != 2) {
      throw ParameterError("each coordinate must be an [x, y] pair");
    }
    coords.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return Instance(std::move(coords), j.value("name", std::string{}));
}

}  // namespace pointroute
