#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gfn/kernels.hpp"

namespace gfn::kernels {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

namespace {

struct Tap {
  std::int64_t index;
  double weight;
};

// Contribution lists for resampling a length-`in` axis to length `out`.
std::vector<std::vector<Tap>> axis_taps(std::int64_t in, std::int64_t out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double support = 2.0 / stretch;
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto first = static_cast<std::int64_t>(std::floor(center - support));
    const auto last = static_cast<std::int64_t>(std::ceil(center + support));
    auto& list = taps[static_cast<std::size_t>(o)];
    double total = 0.0;
    for (std::int64_t j = first; j <= last; ++j) {
      const double wgt = stretch * cubic_kernel(stretch * (center - static_cast<double>(j)));
      if (wgt == 0.0) continue;
      const std::int64_t idx = std::clamp<std::int64_t>(j, 0, in - 1);
      if (!list.empty() && list.back().index == idx) {
        list.back().weight += wgt;
      } else {
        list.push_back({idx, wgt});
      }
      total += wgt;
    }
    for (auto& t : list) t.weight /= total;
  }
  return taps;
}

void check_sizes(std::int64_t in_h, std::int64_t in_w, std::int64_t out_h, std::int64_t out_w) {
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("bicubic_resize: non-positive target size " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  if (in_h <= 0 || in_w <= 0) {
    throw ShapeError("bicubic_resize: empty input height/width " + std::to_string(in_h) + "x" +
                     std::to_string(in_w));
  }
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape& s = x.shape();
  check_sizes(s.h, s.w, out_h, out_w);
  const auto taps_x = axis_taps(s.w, out_w);
  const auto taps_y = axis_taps(s.h, out_h);
  Tensor<T> y({s.n, s.c, out_h, out_w});
  std::vector<double> tmp(static_cast<std::size_t>(s.h * out_w));
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* src = x.plane(n, c);
      for (std::int64_t r = 0; r < s.h; ++r) {
        for (std::int64_t o = 0; o < out_w; ++o) {
          double acc = 0.0;
          for (const Tap& t : taps_x[static_cast<std::size_t>(o)]) acc += t.weight * src[r * s.w + t.index];
          tmp[static_cast<std::size_t>(r * out_w + o)] = acc;
        }
      }
      T* dst = y.plane(n, c);
      for (std::int64_t o = 0; o < out_h; ++o) {
        for (std::int64_t col = 0; col < out_w; ++col) {
          double acc = 0.0;
          for (const Tap& t : taps_y[static_cast<std::size_t>(o)]) {
            acc += t.weight * tmp[static_cast<std::size_t>(t.index * out_w + col)];
          }
          dst[o * out_w + col] = static_cast<T>(acc);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bicubic_resize_backward(const Tensor<T>& dy, std::int64_t in_h, std::int64_t in_w) {
  const Shape& s = dy.shape();
  check_sizes(in_h, in_w, s.h, s.w);
  const auto taps_x = axis_taps(in_w, s.w);
  const auto taps_y = axis_taps(in_h, s.h);
  Tensor<T> dx({s.n, s.c, in_h, in_w});
  std::vector<double> tmp(static_cast<std::size_t>(in_h * s.w));
  std::vector<double> acc(static_cast<std::size_t>(in_h * in_w));
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* g = dy.plane(n, c);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::int64_t o = 0; o < s.h; ++o) {
        for (const Tap& t : taps_y[static_cast<std::size_t>(o)]) {
          for (std::int64_t col = 0; col < s.w; ++col) {
            tmp[static_cast<std::size_t>(t.index * s.w + col)] += t.weight * g[o * s.w + col];
          }
        }
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::int64_t r = 0; r < in_h; ++r) {
        for (std::int64_t o = 0; o < s.w; ++o) {
          const double v = tmp[static_cast<std::size_t>(r * s.w + o)];
          for (const Tap& t : taps_x[static_cast<std::size_t>(o)]) {
            acc[static_cast<std::size_t>(r * in_w + t.index)] += t.weight * v;
          }
        }
      }
      T* dst = dx.plane(n, c);
      for (std::int64_t i = 0; i < in_h * in_w; ++i) dst[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
    }
  }
  return dx;
}

template Tensor<float> bicubic_resize(const Tensor<float>&, std::int64_t, std::int64_t);
template Tensor<double> bicubic_resize(const Tensor<double>&, std::int64_t, std::int64_t);
template Tensor<float> bicubic_resize_backward(const Tensor<float>&, std::int64_t, std::int64_t);
template Tensor<double> bicubic_resize_backward(const Tensor<double>&, std::int64_t, std::int64_t);

}  // namespace gfn::kernels
