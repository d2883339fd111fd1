#include "pointroute/param_store.hpp"

namespace pointroute {

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.size() != size()) {
    throw DimensionError("gradient sets have " + std::to_string(size()) +
                         " and " + std::to_string(other.size()) + " buffers");
  }
  for (std::size_t i = 0; i < buffers_.size(); ++i) buffers_[i] += other.buffers_[i];
  return *this;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& b : buffers_) total += b.squaredNorm();
  return total;
}

}  // namespace pointroute
