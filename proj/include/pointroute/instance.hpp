#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pointroute {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);

// Records how a normalized instance maps back to its source frame:
// original = normalized * scale + offset.
struct SourceFrame {
  Point offset;
  double scale = 1.0;
};

// A Euclidean TSP instance on a complete undirected graph.
class Instance {
 public:
  Instance() = default;
  explicit Instance(std::vector<Point> coords, std::string name = {});

  std::size_t size() const noexcept { return coords_.size(); }
  const std::vector<Point>& coords() const noexcept { return coords_; }
  const Point& operator[](std::size_t i) const { return coords_[i]; }
  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  const std::optional<SourceFrame>& source_frame() const noexcept {
    return source_frame_;
  }
  void set_source_frame(SourceFrame frame) { source_frame_ = frame; }

  double cost(std::size_t i, std::size_t j) const {
    return distance(coords_[i], coords_[j]);
  }

  // True when every coordinate lies in [0,1].
  bool in_unit_square() const;

 private:
  std::vector<Point> coords_;
  std::string name_;
  std::optional<SourceFrame> source_frame_;
};

// Throws TourError (duplicate / missing / out-of-range) unless `order` is a
// permutation of 0..n-1.
void validate_tour(std::size_t n, std::span<const int> order);
inline void validate_tour(const Instance& instance, std::span<const int> order) {
  validate_tour(instance.size(), order);
}

// Closed-tour length with continuous Euclidean distances.
double tour_length(const Instance& instance, std::span<const int> order);

class Tour {
 public:
  Tour(const Instance& instance, std::vector<int> order);

  const std::vector<int>& order() const noexcept { return order_; }
  double length() const noexcept { return length_; }
  double reward() const noexcept { return -length_; }
  std::size_t size() const noexcept { return order_.size(); }

 private:
  std::vector<int> order_;
  double length_ = 0.0;
};

// Rotates the smallest index to the front and picks the lexicographically
// smaller of the two directions.
std::vector<int> canonical_order(std::span<const int> order);

// The 8 dihedral maps of the unit square, in the fixed order
// (x,y) (y,x) (x,1-y) (y,1-x) (1-x,y) (1-y,x) (1-x,1-y) (1-y,1-x).
inline constexpr std::size_t kSymmetryCount = 8;
std::array<Point, kSymmetryCount> apply_symmetries(const Point& p);
Point apply_symmetry(std::size_t which, const Point& p);
Instance transform_instance(const Instance& instance, std::size_t which);

// Uniform i.i.d. instances on [0,1]^2; a pure function of its arguments.
std::vector<Instance> generate_instances(std::uint64_t seed, std::size_t n,
                                         std::size_t count);

struct Normalized {
  Instance instance;
  Point offset;
  double scale = 1.0;
};

// Min-max translation followed by one uniform scale (aspect ratio kept).
Normalized normalize_to_unit_square(const Instance& instance);

// 100 * (length - opt) / opt.
double optimality_gap(double length, double opt);

nlohmann::json to_json(const Instance& instance);
Instance instance_from_json(const nlohmann::json& j);

}  // namespace pointroute
