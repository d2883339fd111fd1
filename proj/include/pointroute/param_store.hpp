#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pointroute/errors.hpp"
#include "pointroute/tensor.hpp"

namespace pointroute {

// Gradient buffers aligned with the slots of a parameter store. Always double
// precision so accumulation over many trajectories stays quiet enough for
// finite-difference checks.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix<double>> buffers)
      : buffers_(std::move(buffers)) {}

  std::size_t size() const noexcept { return buffers_.size(); }
  void append(Matrix<double> buffer) { buffers_.push_back(std::move(buffer)); }
  Matrix<double>& operator[](std::size_t slot) { return buffers_[slot]; }
  const Matrix<double>& operator[](std::size_t slot) const { return buffers_[slot]; }

  void zero() {
    for (auto& b : buffers_) b.setZero();
  }
  void scale(double factor) {
    for (auto& b : buffers_) b *= factor;
  }
  Gradients& operator+=(const Gradients& other);

  double squared_norm() const;

  // Adds a product computed at the engine's precision.
  template <typename Derived>
  void accumulate(std::size_t slot, const Eigen::MatrixBase<Derived>& g) {
    buffers_[slot].noalias() += g.template cast<double>();
  }

 private:
  std::vector<Matrix<double>> buffers_;
};

// Named parameter tensors with one gradient buffer per tensor.
template <typename T>
class BasicParamStore {
 public:
  std::size_t add(std::string name, Matrix<T> value) {
    if (index_.count(name)) {
      throw ParameterError("duplicate parameter name '" + name + "'");
    }
    const std::size_t slot = names_.size();
    index_.emplace(name, slot);
    names_.push_back(std::move(name));
    grads_.append(Matrix<double>::Zero(value.rows(), value.cols()));
    values_.push_back(std::move(value));
    return slot;
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t slot) const { return names_.at(slot); }

  Matrix<T>& value(std::size_t slot) { return values_[slot]; }
  const Matrix<T>& value(std::size_t slot) const { return values_[slot]; }

  Matrix<double>& grad(std::size_t slot) { return grads_[slot]; }
  const Matrix<double>& grad(std::size_t slot) const { return grads_[slot]; }
  Gradients& grads() noexcept { return grads_; }
  const Gradients& grads() const noexcept { return grads_; }

  bool contains(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
  }
  std::size_t slot(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw ParameterError("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
  }

  void zero_grad() { grads_.zero(); }

  // Fresh zeroed buffers with this store's shapes (worker-local accumulators).
  Gradients make_gradients() const {
    std::vector<Matrix<double>> buffers;
    buffers.reserve(values_.size());
    for (const auto& v : values_) {
      buffers.push_back(Matrix<double>::Zero(v.rows(), v.cols()));
    }
    return Gradients(std::move(buffers));
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& v : values_) total += static_cast<std::size_t>(v.size());
    return total;
  }

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      out.add(names_[i], values_[i].template cast<U>());
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<T>> values_;
  Gradients grads_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParamStore = BasicParamStore<float>;

}  // namespace pointroute
