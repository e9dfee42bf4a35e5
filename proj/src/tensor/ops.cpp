#include "gfn/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gfn::ops {
namespace {

template <typename T>
void same_graph(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument(std::string(op) + ": operands on different graphs");
}

template <typename T>
void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.n != b.n) throw ShapeError(std::string(op) + ": batch mismatch " + a.str() + " vs " + b.str());
  if (a.c != b.c) throw ShapeError(std::string(op) + ": channel mismatch " + a.str() + " vs " + b.str());
  if (a.h != b.h) throw ShapeError(std::string(op) + ": height mismatch " + a.str() + " vs " + b.str());
  if (a.w != b.w) throw ShapeError(std::string(op) + ": width mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
void check_broadcast(const Shape& a, const Shape& b, Broadcast mode, const char* op) {
  if (mode == Broadcast::none) {
    require_same_shape<T>(a, b, op);
    return;
  }
  if (b.c != 1) throw ShapeError(std::string(op) + ": channel broadcast needs single-channel b, got " + b.str());
  require_same_shape<T>({a.n, 1, a.h, a.w}, b, op);
}

Shape scalar_shape() { return {1, 1, 1, 1}; }

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, ConvParams p) {
  same_graph(x, weight, "conv2d");
  const Tensor<T>* b = bias ? &bias->value() : nullptr;
  Tensor<T> y = kernels::conv2d(x.value(), weight.value(), b, p);
  std::vector<std::size_t> inputs{x.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  const bool has_bias = bias.has_value();
  return x.graph().record(std::move(y), std::move(inputs), [p, has_bias](Graph<T>& g, std::size_t self) {
    kernels::conv2d_backward(g.input_value(self, 0), g.input_value(self, 1), g.out_grad(self), p,
                             g.input_grad(self, 0), g.input_grad(self, 1),
                             has_bias ? g.input_grad(self, 2) : nullptr);
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
                        ConvParams p) {
  same_graph(x, weight, "conv_transpose2d");
  const Tensor<T>* b = bias ? &bias->value() : nullptr;
  Tensor<T> y = kernels::conv_transpose2d(x.value(), weight.value(), b, p);
  std::vector<std::size_t> inputs{x.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  const bool has_bias = bias.has_value();
  return x.graph().record(std::move(y), std::move(inputs), [p, has_bias](Graph<T>& g, std::size_t self) {
    kernels::conv_transpose2d_backward(g.input_value(self, 0), g.input_value(self, 1), g.out_grad(self), p,
                                       g.input_grad(self, 0), g.input_grad(self, 1),
                                       has_bias ? g.input_grad(self, 2) : nullptr);
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  return x.graph().record(kernels::pixel_shuffle(x.value(), r), {x.id()}, [r](Graph<T>& g, std::size_t self) {
    Tensor<T>* dx = g.input_grad(self, 0);
    const Tensor<T> back = kernels::pixel_unshuffle(g.out_grad(self), r);
    for (std::size_t i = 0; i < back.size(); ++i) (*dx)[i] += back[i];
  });
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r) {
  return x.graph().record(kernels::pixel_unshuffle(x.value(), r), {x.id()}, [r](Graph<T>& g, std::size_t self) {
    Tensor<T>* dx = g.input_grad(self, 0);
    const Tensor<T> back = kernels::pixel_shuffle(g.out_grad(self), r);
    for (std::size_t i = 0; i < back.size(); ++i) (*dx)[i] += back[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : s * xv[i];
  return x.graph().record(std::move(y), {x.id()}, [s](Graph<T>& g, std::size_t self) {
    const Tensor<T>& xin = g.input_value(self, 0);
    const Tensor<T>& gy = g.out_grad(self);
    Tensor<T>* dx = g.input_grad(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i) (*dx)[i] += xin[i] > T(0) ? gy[i] : s * gy[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
  const std::size_t out_id = x.graph().size();
  return x.graph().record(std::move(y), {x.id()}, [out_id](Graph<T>& g, std::size_t self) {
    const Tensor<T>& yv = g.value(out_id);
    const Tensor<T>& gy = g.out_grad(self);
    Tensor<T>* dx = g.input_grad(self, 0);
    for (std::size_t i = 0; i < yv.size(); ++i) (*dx)[i] += gy[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b, Broadcast mode) {
  same_graph(a, b, "add");
  const Shape as = a.shape();
  check_broadcast<T>(as, b.shape(), mode, "add");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  const std::int64_t plane = as.plane();
  for (std::int64_t n = 0; n < as.n; ++n)
    for (std::int64_t c = 0; c < as.c; ++c) {
      T* dst = y.plane(n, c);
      const T* src = mode == Broadcast::none ? bv.plane(n, c) : bv.plane(n, 0);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  return a.graph().record(std::move(y), {a.id(), b.id()}, [mode, as, plane](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gy = g.out_grad(self);
    if (Tensor<T>* da = g.input_grad(self, 0)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*da)[i] += gy[i];
    }
    if (Tensor<T>* db = g.input_grad(self, 1)) {
      for (std::int64_t n = 0; n < as.n; ++n)
        for (std::int64_t c = 0; c < as.c; ++c) {
          const T* src = gy.plane(n, c);
          T* dst = mode == Broadcast::none ? db->plane(n, c) : db->plane(n, 0);
          for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b, Broadcast mode) {
  same_graph(a, b, "mul");
  const Shape as = a.shape();
  check_broadcast<T>(as, b.shape(), mode, "mul");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  const std::int64_t plane = as.plane();
  for (std::int64_t n = 0; n < as.n; ++n)
    for (std::int64_t c = 0; c < as.c; ++c) {
      T* dst = y.plane(n, c);
      const T* src = mode == Broadcast::none ? bv.plane(n, c) : bv.plane(n, 0);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] *= src[i];
    }
  return a.graph().record(std::move(y), {a.id(), b.id()}, [mode, as, plane](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gy = g.out_grad(self);
    const Tensor<T>& av = g.input_value(self, 0);
    const Tensor<T>& bv = g.input_value(self, 1);
    Tensor<T>* da = g.input_grad(self, 0);
    Tensor<T>* db = g.input_grad(self, 1);
    for (std::int64_t n = 0; n < as.n; ++n)
      for (std::int64_t c = 0; c < as.c; ++c) {
        const std::int64_t bc = mode == Broadcast::none ? c : 0;
        const T* gp = gy.plane(n, c);
        if (da != nullptr) {
          const T* bp = bv.plane(n, bc);
          T* dp = da->plane(n, c);
          for (std::int64_t i = 0; i < plane; ++i) dp[i] += gp[i] * bp[i];
        }
        if (db != nullptr) {
          const T* ap = av.plane(n, c);
          T* dp = db->plane(n, bc);
          for (std::int64_t i = 0; i < plane; ++i) dp[i] += gp[i] * ap[i];
        }
      }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_graph(a, b, "sub");
  require_same_shape<T>(a.shape(), b.shape(), "sub");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.graph().record(std::move(y), {a.id(), b.id()}, [](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gy = g.out_grad(self);
    if (Tensor<T>* da = g.input_grad(self, 0)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*da)[i] += gy[i];
    }
    if (Tensor<T>* db = g.input_grad(self, 1)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*db)[i] -= gy[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  Tensor<T> y = x.value();
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= f;
  return x.graph().record(std::move(y), {x.id()}, [f](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gy = g.out_grad(self);
    Tensor<T>* dx = g.input_grad(self, 0);
    for (std::size_t i = 0; i < gy.size(); ++i) (*dx)[i] += f * gy[i];
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  std::int64_t channels = 0;
  std::vector<std::size_t> inputs;
  std::vector<std::int64_t> offsets;
  for (const Var<T>& p : parts) {
    same_graph(parts.front(), p, "concat_channels");
    const Shape s = p.shape();
    if (s.n != first.n) throw ShapeError("concat_channels: batch mismatch " + s.str() + " vs " + first.str());
    if (s.h != first.h) throw ShapeError("concat_channels: height mismatch " + s.str() + " vs " + first.str());
    if (s.w != first.w) throw ShapeError("concat_channels: width mismatch " + s.str() + " vs " + first.str());
    offsets.push_back(channels);
    channels += s.c;
    inputs.push_back(p.id());
  }
  Tensor<T> y({first.n, channels, first.h, first.w});
  const std::int64_t plane = first.plane();
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    for (std::int64_t n = 0; n < first.n; ++n) {
      const T* src = v.plane(n, 0);
      std::copy(src, src + v.shape().c * plane, y.plane(n, offsets[k]));
    }
  }
  return parts.front().graph().record(
      std::move(y), std::move(inputs), [offsets, plane](Graph<T>& g, std::size_t self) {
        const Tensor<T>& gy = g.out_grad(self);
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          Tensor<T>* dk = g.input_grad(self, k);
          if (dk == nullptr) continue;
          const std::int64_t ck = dk->shape().c;
          for (std::int64_t n = 0; n < dk->shape().n; ++n) {
            const T* src = gy.plane(n, offsets[k]);
            T* dst = dk->plane(n, 0);
            for (std::int64_t i = 0; i < ck * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().data()) acc += v;
  Tensor<T> y(scalar_shape(), static_cast<T>(acc));
  return x.graph().record(std::move(y), {x.id()}, [](Graph<T>& g, std::size_t self) {
    const T gy = g.out_grad(self)[0];
    Tensor<T>* dx = g.input_grad(self, 0);
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += gy;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const double count = static_cast<double>(x.value().size());
  double acc = 0.0;
  for (T v : x.value().data()) acc += v;
  Tensor<T> y(scalar_shape(), static_cast<T>(acc / count));
  return x.graph().record(std::move(y), {x.id()}, [count](Graph<T>& g, std::size_t self) {
    const T gy = static_cast<T>(g.out_grad(self)[0] / count);
    Tensor<T>* dx = g.input_grad(self, 0);
    for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += gy;
  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
  same_graph(a, b, "mse_loss");
  require_same_shape<T>(a.shape(), b.shape(), "mse_loss");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const double count = static_cast<double>(av.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  Tensor<T> y(scalar_shape(), static_cast<T>(acc / count));
  return a.graph().record(std::move(y), {a.id(), b.id()}, [count](Graph<T>& g, std::size_t self) {
    const Tensor<T>& av = g.input_value(self, 0);
    const Tensor<T>& bv = g.input_value(self, 1);
    const T k = static_cast<T>(2.0 * g.out_grad(self)[0] / count);
    if (Tensor<T>* da = g.input_grad(self, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*da)[i] += k * (av[i] - bv[i]);
    }
    if (Tensor<T>* db = g.input_grad(self, 1)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*db)[i] -= k * (av[i] - bv[i]);
    }
  });
}

template <typename T>
Var<T> bicubic_resize(const Var<T>& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape in = x.shape();
  return x.graph().record(kernels::bicubic_resize(x.value(), out_h, out_w), {x.id()},
                          [in](Graph<T>& g, std::size_t self) {
                            const Tensor<T> back = kernels::bicubic_resize_backward(g.out_grad(self), in.h, in.w);
                            Tensor<T>* dx = g.input_grad(self, 0);
                            for (std::size_t i = 0; i < back.size(); ++i) (*dx)[i] += back[i];
                          });
}

std::int64_t scaled_extent(std::int64_t in, Scale s) {
  if (s.num <= 0 || s.den <= 0) {
    throw ShapeError("bicubic_resize: scale must be positive, got " + std::to_string(s.num) + "/" +
                     std::to_string(s.den));
  }
  if ((in * s.num) % s.den != 0) {
    throw ShapeError("bicubic_resize: extent " + std::to_string(in) + " times " + std::to_string(s.num) + "/" +
                     std::to_string(s.den) + " is not an integer");
  }
  return in * s.num / s.den;
}

template <typename T>
Var<T> bicubic_resize(const Var<T>& x, Scale s) {
  return bicubic_resize(x, scaled_extent(x.shape().h, s), scaled_extent(x.shape().w, s));
}

#define GFN_INSTANTIATE_OPS(T)                                                                              \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, ConvParams);          \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, ConvParams); \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                                       \
  template Var<T> pixel_unshuffle(const Var<T>&, int);                                                     \
  template Var<T> leaky_relu(const Var<T>&, double);                                                       \
  template Var<T> sigmoid(const Var<T>&);                                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&, Broadcast);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&, Broadcast);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> scale(const Var<T>&, double);                                                            \
  template Var<T> concat_channels(std::span<const Var<T>>);                                                \
  template Var<T> sum(const Var<T>&);                                                                      \
  template Var<T> mean(const Var<T>&);                                                                     \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> bicubic_resize(const Var<T>&, std::int64_t, std::int64_t);                               \
  template Var<T> bicubic_resize(const Var<T>&, Scale);

GFN_INSTANTIATE_OPS(float)
GFN_INSTANTIATE_OPS(double)

}  // namespace gfn::ops
