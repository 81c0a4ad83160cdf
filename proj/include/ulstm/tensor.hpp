#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ulstm/errors.hpp"
#include "ulstm/memory.hpp"

namespace ulstm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& dims);
std::string shape_string(const Shape& dims);

// Dense row-major array, last axis fastest. Frames use (N,C,H,W).
template <typename T>
class Tensor {
 public:
  using Buffer = std::vector<T, TrackingAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)), data_(shape_numel(dims_), fill) {}
  Tensor(Shape dims, std::span<const T> values) : dims_(std::move(dims)), data_(values.begin(), values.end()) {
    if (data_.size() != shape_numel(dims_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_string(dims_));
    }
  }
  Tensor(Shape dims, std::initializer_list<T> values)
      : Tensor(std::move(dims), std::span<const T>(values.begin(), values.size())) {}

  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return {data_.data(), data_.size()}; }
  std::span<const T> values() const { return {data_.data(), data_.size()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // (n,c,h,w) accessor for rank-4 tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void reshape(Shape dims) {
    if (shape_numel(dims) != data_.size()) {
      throw ShapeError("reshape " + shape_string(dims_) + " -> " + shape_string(dims));
    }
    dims_ = std::move(dims);
  }

  bool operator==(const Tensor& other) const { return dims_ == other.dims_ && data_ == other.data_; }

  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape dims_;
  Buffer data_;
};

// Views one sample of an (N,...) tensor as a contiguous span.
template <typename T>
std::span<const T> sample_span(const Tensor<T>& t, std::size_t n) {
  const std::size_t per = t.size() / t.dim(0);
  return t.values().subspan(n * per, per);
}

void require_rank(const Shape& dims, std::size_t rank, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ulstm
