#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "spg/error.hpp"

namespace spg {

inline constexpr std::size_t kTensorAlignment = 64;

/// 64-byte aligned allocation. Vectorized reductions peel differently
/// depending on the address, so alignment keeps results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kTensorAlignment - 1) / kTensorAlignment * kTensorAlignment;
    void* p = std::aligned_alloc(kTensorAlignment, bytes == 0 ? kTensorAlignment : bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

struct AlignedFree {
  void operator()(void* p) const noexcept { std::free(p); }
};

/// Uninitialized aligned scratch of n elements.
template <typename T>
std::unique_ptr<T[], AlignedFree> aligned_buffer(std::size_t n) {
  return std::unique_ptr<T[], AlignedFree>(AlignedAllocator<T>().allocate(n));
}

/// Dimensions of a rank-4 (batch, channel, height, width) array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  constexpr bool valid() const { return n >= 0 && c >= 0 && h >= 0 && w >= 0; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense row-major (n,c,h,w) array with value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (!shape.valid()) throw ShapeError("negative tensor dimension " + shape.str());
    data_.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, const std::vector<T>& data) : Tensor(shape, AlignedVector<T>(data.begin(), data.end())) {}

  Tensor(Shape shape, AlignedVector<T> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid() || data_.size() != shape.numel())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + shape.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Pointer to the start of channel plane (n, c).
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    AlignedVector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  // Single-sample slice [n, n+1).
  Tensor sample(int n) const {
    Shape s{1, shape_.c, shape_.h, shape_.w};
    const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(index(n, 0, 0, 0));
    return Tensor(s, AlignedVector<T>(begin, begin + static_cast<std::ptrdiff_t>(s.numel())));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

/// Stack tensors with equal (c,h,w) along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape& q = p.shape();
    if (q.c != s.c || q.h != s.h || q.w != s.w)
      throw ShapeError("stack_batch: " + q.str() + " vs " + s.str());
    total += q.n;
  }
  AlignedVector<T> data;
  data.reserve(static_cast<std::size_t>(total) * s.c * s.h * s.w);
  for (const auto& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  s.n = total;
  return Tensor<T>(s, std::move(data));
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& parts) {
  return stack_batch(std::span<const Tensor<T>>(parts));
}

using Tensor4f = Tensor<float>;
using Tensor4d = Tensor<double>;

}  // namespace spg
