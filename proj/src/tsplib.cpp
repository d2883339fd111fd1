#include "pointroute/tsplib.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pointroute/errors.hpp"

namespace pointroute {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

// Splits "KEY : VALUE" / "KEY: VALUE" / "KEY" into an upper-cased key and the
// trimmed value.
std::pair<std::string, std::string> split_keyword(const std::string& line) {
  const auto colon = line.find(':');
  if (colon == std::string::npos) return {upper(trim(line)), {}};
  return {upper(trim(std::string_view(line).substr(0, colon))),
          trim(std::string_view(line).substr(colon + 1))};
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string current;
  for (const char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

bool is_keyword_line(const std::string& trimmed) {
  return !trimmed.empty() &&
         std::isalpha(static_cast<unsigned char>(trimmed.front()));
}

}  // namespace

TsplibProblem parse_tsplib(std::string_view text) {
  const auto lines = split_lines(text);
  TsplibMeta meta;
  std::vector<std::string> warnings;
  std::optional<std::size_t> dimension;
  bool have_weight_type = false;
  bool have_section = false;
  bool have_eof = false;
  std::vector<std::pair<std::size_t, Point>> nodes;  // (1-based id, coord)
  std::vector<std::size_t> node_lines;
  std::size_t section_end_line = lines.size();

  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string line = trim(lines[i]);
    const std::size_t lineno = i + 1;
    ++i;
    if (line.empty()) continue;
    const auto [key, value] = split_keyword(line);
    if (key == "EOF") {
      have_eof = true;
      break;
    }
    if (key == "NAME") {
      meta.name = value;
    } else if (key == "COMMENT") {
      meta.comment = meta.comment ? *meta.comment + "\n" + value : value;
    } else if (key == "TYPE") {
      const auto type = upper(value);
      if (type != "TSP") {
        throw UnsupportedFormatError("unsupported TSPLIB TYPE '" + value +
                                     "' (only TSP)");
      }
    } else if (key == "DIMENSION") {
      try {
        dimension = std::stoul(value);
      } catch (const std::exception&) {
        throw ParseError(lineno, "bad DIMENSION '" + value + "'");
      }
    } else if (key == "EDGE_WEIGHT_TYPE") {
      if (upper(value) != "EUC_2D") {
        throw UnsupportedFormatError("unsupported EDGE_WEIGHT_TYPE '" + value +
                                     "' (only EUC_2D)");
      }
      have_weight_type = true;
    } else if (key == "NODE_COORD_SECTION") {
      have_section = true;
      while (i < lines.size()) {
        const std::string row = trim(lines[i]);
        if (row.empty()) {
          ++i;
          continue;
        }
        if (is_keyword_line(row)) break;
        std::istringstream in(row);
        double id = 0;
        Point p;
        if (!(in >> id >> p.x >> p.y) || id < 1 || id != std::floor(id)) {
          throw ParseError(i + 1, "malformed coordinate line '" + row + "'");
        }
        nodes.emplace_back(static_cast<std::size_t>(id), p);
        node_lines.push_back(i + 1);
        ++i;
      }
      section_end_line = i + 1;
    } else if (key == "DISPLAY_DATA_TYPE" || key == "NODE_COORD_TYPE") {
      // informational only
    } else if (key.ends_with("_SECTION")) {
      throw UnsupportedFormatError("unsupported TSPLIB section " + key);
    } else {
      warnings.push_back("line " + std::to_string(lineno) +
                         ": ignoring keyword " + key);
    }
  }

  if (!have_section) {
    throw ParseError(lines.size(), "missing NODE_COORD_SECTION");
  }
  if (!have_eof) warnings.push_back("missing EOF keyword");
  if (!have_weight_type) {
    warnings.push_back("missing EDGE_WEIGHT_TYPE, assuming EUC_2D");
  }
  if (!dimension) {
    warnings.push_back("missing DIMENSION, using coordinate count");
    dimension = nodes.size();
  }
  if (nodes.size() != *dimension) {
    throw ParseError(section_end_line,
                     "DIMENSION " + std::to_string(*dimension) + " but " +
                         std::to_string(nodes.size()) + " coordinate lines");
  }

  std::vector<Point> coords(*dimension);
  std::vector<char> seen(*dimension, 0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto [id, p] = nodes[k];
    if (id > *dimension || seen[id - 1]) {
      throw ParseError(node_lines[k],
                       "node id " + std::to_string(id) + " duplicated or > " +
                           "DIMENSION");
    }
    seen[id - 1] = 1;
    coords[id - 1] = p;
  }
  meta.dimension = *dimension;
  return {Instance(std::move(coords), meta.name), std::move(meta),
          std::move(warnings)};
}

TsplibProblem read_tsplib(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  auto problem = parse_tsplib(buf.str());
  if (problem.meta.name.empty()) {
    problem.meta.name = path.stem().string();
    problem.instance.set_name(problem.meta.name);
  }
  return problem;
}

std::int64_t rounded_distance(const Point& a, const Point& b) {
  return static_cast<std::int64_t>(std::floor(distance(a, b) + 0.5));
}

std::int64_t tsplib_tour_length(const Instance& instance,
                                std::span<const int> order) {
  validate_tour(instance, order);
  const std::size_t n = order.size();
  std::int64_t total = rounded_distance(instance[order[n - 1]], instance[order[0]]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    total += rounded_distance(instance[order[i]], instance[order[i + 1]]);
  }
  return total;
}

std::string write_tour(const TsplibMeta& meta, std::span<const int> order) {
  validate_tour(order.size(), order);
  std::ostringstream out;
  out << "NAME : " << meta.name << ".tour\n";
  out << "TYPE : TOUR\n";
  out << "DIMENSION : " << order.size() << "\n";
  out << "TOUR_SECTION\n";
  for (const int v : order) out << (v + 1) << "\n";
  out << "-1\nEOF\n";
  return out.str();
}

std::vector<int> parse_tour(std::string_view text) {
  const auto lines = split_lines(text);
  std::optional<std::size_t> dimension;
  std::vector<int> order;
  bool in_section = false;
  bool terminated = false;
  for (std::size_t i = 0; i < lines.size() && !terminated; ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    if (!in_section) {
      const auto [key, value] = split_keyword(line);
      if (key == "TOUR_SECTION") {
        in_section = true;
      } else if (key == "DIMENSION") {
        dimension = std::stoul(value);
      } else if (key == "EOF") {
        break;
      }
      continue;
    }
    std::istringstream in(line);
    long v = 0;
    while (in >> v) {
      if (v == -1) {
        terminated = true;
        break;
      }
      if (v < 1) throw ParseError(i + 1, "bad tour index " + std::to_string(v));
      order.push_back(static_cast<int>(v - 1));
    }
  }
  if (!in_section) throw ParseError(lines.size(), "missing TOUR_SECTION");
  if (dimension && order.size() != *dimension) {
    throw ParseError(lines.size(), "tour has " + std::to_string(order.size()) +
                                       " nodes, DIMENSION " +
                                       std::to_string(*dimension));
  }
  validate_tour(order.size(), order);
  return order;
}

}  // namespace pointroute
