#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfn {

/// Raised when operand shapes are incompatible. The message names the
/// offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extents of a batch-channel-height-width tensor.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense 4-D array in NCHW order. Plain value type; the autodiff graph owns
/// the tensors it records and never mutates them after creation.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + y) * shape_.w + x);
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) { return data_[index(n, c, y, x)]; }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[index(n, c, y, x)];
  }

  /// Pointer to plane (n, c).
  T* plane(std::int64_t n, std::int64_t c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(std::int64_t n, std::int64_t c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  /// Samples [begin, end) along the batch axis.
  Tensor slice_batch(std::int64_t begin, std::int64_t end) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Concatenates tensors of identical C/H/W along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items);

void require_valid_shape(const Shape& s, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gfn
