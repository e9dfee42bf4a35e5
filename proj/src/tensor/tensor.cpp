#include "gfn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gfn {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

void require_valid_shape(const Shape& s, const char* what) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError(std::string(what) + ": negative extent in shape " + s.str());
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  require_valid_shape(shape, "Tensor");
  data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  require_valid_shape(shape, "Tensor");
  if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape.str());
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::slice_batch(std::int64_t begin, std::int64_t end) const {
  if (begin < 0 || end > shape_.n || begin > end) {
    throw ShapeError("slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside batch of " + std::to_string(shape_.n));
  }
  const auto per = static_cast<std::size_t>(shape_.c * shape_.h * shape_.w);
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * per),
                     data_.begin() + static_cast<std::ptrdiff_t>(end * per));
  return Tensor<T>({end - begin, shape_.c, shape_.h, shape_.w}, std::move(out));
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: no tensors");
  const Shape first = items.front().shape();
  std::vector<T> out;
  std::int64_t n = 0;
  for (const auto& t : items) {
    const Shape s = t.shape();
    if (s.c != first.c) throw ShapeError("stack_batch: channel mismatch " + s.str() + " vs " + first.str());
    if (s.h != first.h) throw ShapeError("stack_batch: height mismatch " + s.str() + " vs " + first.str());
    if (s.w != first.w) throw ShapeError("stack_batch: width mismatch " + s.str() + " vs " + first.str());
    out.insert(out.end(), t.data().begin(), t.data().end());
    n += s.n;
  }
  return Tensor<T>({n, first.c, first.h, first.w}, std::move(out));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);

}  // namespace gfn
