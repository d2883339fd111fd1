#include "pointroute/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace pointroute {

std::size_t worker_count() {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("POINTROUTE_THREADS")) {
    try {
      const long value = std::stol(cap);
      if (value >= 1) workers = std::min(workers, static_cast<std::size_t>(value));
    } catch (const std::exception&) {
      // unparsable: ignore the cap
    }
  }
  return workers;
}

}  // namespace pointroute
