#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "gfn/kernels.hpp"

namespace gfn::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedConstMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Target number of elements in one im2col buffer.
constexpr std::int64_t kChunkElems = std::int64_t{1} << 17;

// Sliding-window geometry: a "source" plane of (channels, src_h, src_w) is
// read by a kh x kw window at every "destination" position (dst_h, dst_w).
struct Window {
  std::int64_t channels, src_h, src_w, kh, kw, dst_h, dst_w;
  int stride, pad;
  std::int64_t rows() const { return channels * kh * kw; }
};

template <typename T>
void im2col(const T* src, const Window& g, std::int64_t row0, std::int64_t row1, T* col) {
  const std::int64_t P = (row1 - row0) * g.dst_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = src + c * g.src_h * g.src_w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::int64_t oy = row0; oy < row1; ++oy, dst += g.dst_w) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.src_h) {
            std::fill(dst, dst + g.dst_w, T(0));
            continue;
          }
          const T* row = plane + iy * g.src_w;
          if (g.stride == 1) {
            const std::int64_t off = kx - g.pad;
            const std::int64_t lo = std::clamp<std::int64_t>(-off, 0, g.dst_w);
            const std::int64_t hi = std::clamp<std::int64_t>(g.src_w - off, lo, g.dst_w);
            std::fill(dst, dst + lo, T(0));
            std::copy(row + lo + off, row + hi + off, dst + lo);
            std::fill(dst + hi, dst + g.dst_w, T(0));
          } else {
            for (std::int64_t ox = 0; ox < g.dst_w; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.src_w) ? row[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Window& g, std::int64_t row0, std::int64_t row1, T* src) {
  const std::int64_t P = (row1 - row0) * g.dst_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = src + c * g.src_h * g.src_w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const T* from = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::int64_t oy = row0; oy < row1; ++oy, from += g.dst_w) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.src_h) continue;
          T* row = plane + iy * g.src_w;
          if (g.stride == 1) {
            const std::int64_t off = kx - g.pad;
            const std::int64_t lo = std::clamp<std::int64_t>(-off, 0, g.dst_w);
            const std::int64_t hi = std::clamp<std::int64_t>(g.src_w - off, lo, g.dst_w);
            for (std::int64_t ox = lo; ox < hi; ++ox) row[ox + off] += from[ox];
            continue;
          }
          for (std::int64_t ox = 0; ox < g.dst_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.src_w) row[ix] += from[ox];
          }
        }
      }
    }
  }
}

std::int64_t rows_per_chunk(const Window& g) {
  return std::max<std::int64_t>(1, kChunkElems / std::max<std::int64_t>(1, g.rows() * g.dst_w));
}

bool is_pointwise(const Window& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

void check_conv_params(const ConvParams& p, const char* op) {
  if (p.stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1, got " + std::to_string(p.stride));
  if (p.padding < 0) {
    throw ShapeError(std::string(op) + ": padding must be >= 0, got " + std::to_string(p.padding));
  }
}

template <typename T>
void check_bias(const Tensor<T>* bias, std::int64_t channels, const char* op) {
  if (bias == nullptr) return;
  const Shape& s = bias->shape();
  if (s.n != 1 || s.c != channels || s.h != 1 || s.w != 1) {
    throw ShapeError(std::string(op) + ": bias shape " + s.str() + " must be (1," + std::to_string(channels) +
                     ",1,1)");
  }
}

template <typename T>
void add_bias(Tensor<T>& y, const Tensor<T>* bias) {
  if (bias == nullptr) return;
  const Shape& s = y.shape();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      T* p = y.plane(n, c);
      const T b = (*bias)[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < s.plane(); ++i) p[i] += b;
    }
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& dy, Tensor<T>* dbias) {
  if (dbias == nullptr) return;
  const Shape& s = dy.shape();
  for (std::int64_t c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* p = dy.plane(n, c);
      for (std::int64_t i = 0; i < s.plane(); ++i) acc += p[i];
    }
    (*dbias)[static_cast<std::size_t>(c)] += static_cast<T>(acc);
  }
}

// Window for conv2d: source = input, destination = output.
Window conv_window(const Shape& x, const Shape& w, const ConvParams& p) {
  return Window{x.c, x.h, x.w, w.h, w.w, conv_out_extent(x.h, w.h, p), conv_out_extent(x.w, w.w, p),
                p.stride, p.padding};
}

// Window for conv_transpose2d: source = output, destination = input.
Window transpose_window(const Shape& x, const Shape& w, const ConvParams& p) {
  return Window{w.c,  conv_transpose_out_extent(x.h, w.h, p), conv_transpose_out_extent(x.w, w.w, p), w.h, w.w,
                x.h,  x.w, p.stride, p.padding};
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, const ConvParams& p) {
  const std::int64_t span = in + 2 * p.padding - k;
  if (span < 0) return 0;
  return span / p.stride + 1;
}

std::int64_t conv_transpose_out_extent(std::int64_t in, std::int64_t k, const ConvParams& p) {
  return (in - 1) * p.stride - 2 * p.padding + k;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvParams& p) {
  check_conv_params(p, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(xs.c) + " != weight inC " + std::to_string(ws.c));
  }
  check_bias(bias, ws.n, "conv2d");
  const Window g = conv_window(xs, ws, p);
  if (g.dst_h <= 0 || g.dst_w <= 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(ws.h) + "x" + std::to_string(ws.w) +
                     " larger than padded input height/width " + xs.str());
  }
  Tensor<T> y({xs.n, ws.n, g.dst_h, g.dst_w});
  const std::int64_t K = g.rows();
  const std::int64_t out_plane = g.dst_h * g.dst_w;
  MapConstMat<T> wm(weight.ptr(), ws.n, K);
  std::vector<T> col;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    const T* src = x.plane(n, 0);
    T* dst = y.plane(n, 0);
    if (is_pointwise(g)) {
      MapConstMat<T> xm(src, K, out_plane);
      MapMat<T> ym(dst, ws.n, out_plane);
      ym.noalias() = wm * xm;
      continue;
    }
    const std::int64_t step = rows_per_chunk(g);
    for (std::int64_t r0 = 0; r0 < g.dst_h; r0 += step) {
      const std::int64_t r1 = std::min(g.dst_h, r0 + step);
      const std::int64_t P = (r1 - r0) * g.dst_w;
      col.resize(static_cast<std::size_t>(K * P));
      im2col(src, g, r0, r1, col.data());
      MapConstMat<T> cm(col.data(), K, P);
      StridedMap<T> ym(dst + r0 * g.dst_w, ws.n, P, Eigen::OuterStride<>(out_plane));
      ym.noalias() = wm * cm;
    }
  }
  add_bias(y, bias);
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, const ConvParams& p,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Window g = conv_window(xs, ws, p);
  // At stride 1 the input gradient is a plain convolution of dy with the
  // flipped, channel-swapped kernel. Its im2col buffer has outC*k*k rows
  // instead of inC*k*k and needs no scatter.
  if (dx != nullptr && p.stride == 1 && !is_pointwise(g) && ws.h == ws.w && p.padding <= ws.h - 1) {
    Tensor<T> flipped({ws.c, ws.n, ws.h, ws.w});
    for (std::int64_t o = 0; o < ws.n; ++o) {
      for (std::int64_t i = 0; i < ws.c; ++i) {
        for (std::int64_t ky = 0; ky < ws.h; ++ky) {
          for (std::int64_t kx = 0; kx < ws.w; ++kx) {
            flipped.at(i, o, ws.h - 1 - ky, ws.w - 1 - kx) = weight.at(o, i, ky, kx);
          }
        }
      }
    }
    const Tensor<T> g_in = conv2d<T>(dy, flipped, nullptr, {1, static_cast<int>(ws.h - 1 - p.padding)});
    for (std::size_t i = 0; i < g_in.size(); ++i) (*dx)[i] += g_in[i];
    dx = nullptr;
  }
  const std::int64_t K = g.rows();
  const std::int64_t out_plane = g.dst_h * g.dst_w;
  MapConstMat<T> wm(weight.ptr(), ws.n, K);
  std::vector<T> col;
  std::vector<T> dcol;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    const T* src = x.plane(n, 0);
    const T* gy = dy.plane(n, 0);
    if (is_pointwise(g)) {
      MapConstMat<T> gym(gy, ws.n, out_plane);
      if (dweight != nullptr) {
        MapConstMat<T> xm(src, K, out_plane);
        MapMat<T> dwm(dweight->ptr(), ws.n, K);
        dwm.noalias() += gym * xm.transpose();
      }
      if (dx != nullptr) {
        MapMat<T> dxm(dx->plane(n, 0), K, out_plane);
        dxm.noalias() += wm.transpose() * gym;
      }
      continue;
    }
    const std::int64_t step = rows_per_chunk(g);
    for (std::int64_t r0 = 0; r0 < g.dst_h; r0 += step) {
      const std::int64_t r1 = std::min(g.dst_h, r0 + step);
      const std::int64_t P = (r1 - r0) * g.dst_w;
      StridedConstMap<T> gym(gy + r0 * g.dst_w, ws.n, P, Eigen::OuterStride<>(out_plane));
      if (dweight != nullptr) {
        col.resize(static_cast<std::size_t>(K * P));
        im2col(src, g, r0, r1, col.data());
        MapConstMat<T> cm(col.data(), K, P);
        MapMat<T> dwm(dweight->ptr(), ws.n, K);
        dwm.noalias() += gym * cm.transpose();
      }
      if (dx != nullptr) {
        dcol.resize(static_cast<std::size_t>(K * P));
        MapMat<T> dcm(dcol.data(), K, P);
        dcm.noalias() = wm.transpose() * gym;
        col2im(dcol.data(), g, r0, r1, dx->plane(n, 0));
      }
    }
  }
  accumulate_bias_grad(dy, dbias);
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvParams& p) {
  check_conv_params(p, "conv_transpose2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.c != ws.n) {
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(xs.c) + " != weight inC " +
                     std::to_string(ws.n));
  }
  check_bias(bias, ws.c, "conv_transpose2d");
  const Window g = transpose_window(xs, ws, p);
  if (g.src_h <= 0 || g.src_w <= 0) {
    throw ShapeError("conv_transpose2d: non-positive output height/width for input " + xs.str());
  }
  Tensor<T> y({xs.n, ws.c, g.src_h, g.src_w});
  const std::int64_t K = g.rows();
  const std::int64_t in_plane = xs.h * xs.w;
  MapConstMat<T> wm(weight.ptr(), ws.n, K);
  std::vector<T> col;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    const T* src = x.plane(n, 0);
    T* dst = y.plane(n, 0);
    const std::int64_t step = rows_per_chunk(g);
    for (std::int64_t r0 = 0; r0 < g.dst_h; r0 += step) {
      const std::int64_t r1 = std::min(g.dst_h, r0 + step);
      const std::int64_t P = (r1 - r0) * g.dst_w;
      StridedConstMap<T> xm(src + r0 * g.dst_w, ws.n, P, Eigen::OuterStride<>(in_plane));
      col.resize(static_cast<std::size_t>(K * P));
      MapMat<T> cm(col.data(), K, P);
      cm.noalias() = wm.transpose() * xm;
      col2im(col.data(), g, r0, r1, dst);
    }
  }
  add_bias(y, bias);
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                               const ConvParams& p, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Window g = transpose_window(xs, ws, p);
  const std::int64_t K = g.rows();
  const std::int64_t in_plane = xs.h * xs.w;
  MapConstMat<T> wm(weight.ptr(), ws.n, K);
  std::vector<T> col;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    const T* gy = dy.plane(n, 0);
    const std::int64_t step = rows_per_chunk(g);
    for (std::int64_t r0 = 0; r0 < g.dst_h; r0 += step) {
      const std::int64_t r1 = std::min(g.dst_h, r0 + step);
      const std::int64_t P = (r1 - r0) * g.dst_w;
      col.resize(static_cast<std::size_t>(K * P));
      im2col(gy, g, r0, r1, col.data());
      MapConstMat<T> cm(col.data(), K, P);
      if (dweight != nullptr) {
        StridedConstMap<T> xm(x.plane(n, 0) + r0 * g.dst_w, ws.n, P, Eigen::OuterStride<>(in_plane));
        MapMat<T> dwm(dweight->ptr(), ws.n, K);
        dwm.noalias() += xm * cm.transpose();
      }
      if (dx != nullptr) {
        StridedMap<T> dxm(dx->plane(n, 0) + r0 * g.dst_w, ws.n, P, Eigen::OuterStride<>(in_plane));
        dxm.noalias() += wm * cm;
      }
    }
  }
  accumulate_bias_grad(dy, dbias);
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r < 1) throw ShapeError("pixel_shuffle: factor must be >= 1");
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  if (s.c % rr != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2 = " +
                     std::to_string(rr));
  }
  const std::int64_t oc = s.c / rr;
  Tensor<T> y({s.n, oc, s.h * r, s.w * r});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < oc; ++c)
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j) {
          const T* src = x.plane(n, c * rr + i * r + j);
          for (std::int64_t h = 0; h < s.h; ++h) {
            T* dst = &y.at(n, c, h * r + i, j);
            for (std::int64_t w = 0; w < s.w; ++w) dst[w * r] = src[h * s.w + w];
          }
        }
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r < 1) throw ShapeError("pixel_unshuffle: factor must be >= 1");
  if (s.h % r != 0) throw ShapeError("pixel_unshuffle: height " + std::to_string(s.h) + " not divisible by r");
  if (s.w % r != 0) throw ShapeError("pixel_unshuffle: width " + std::to_string(s.w) + " not divisible by r");
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  const std::int64_t ih = s.h / r;
  const std::int64_t iw = s.w / r;
  Tensor<T> y({s.n, s.c * rr, ih, iw});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j) {
          T* dst = y.plane(n, c * rr + i * r + j);
          for (std::int64_t h = 0; h < ih; ++h) {
            const T* src = &x.at(n, c, h * r + i, j);
            for (std::int64_t w = 0; w < iw; ++w) dst[h * iw + w] = src[w * r];
          }
        }
  return y;
}

#define GFN_INSTANTIATE_CONV(T)                                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvParams&);       \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvParams&,    \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);                                        \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,                 \
                                      const ConvParams&);                                                   \
  template void conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                          const ConvParams&, Tensor<T>*, Tensor<T>*, Tensor<T>*);           \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                                  \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);

GFN_INSTANTIATE_CONV(float)
GFN_INSTANTIATE_CONV(double)

}  // namespace gfn::kernels
