#pragma once

#include <cstdint>

#include "gfn/tensor.hpp"

// Raw (non-recording) tensor kernels. The differentiable wrappers in ops.hpp
// call these; the data generator uses the resampling kernels directly.

namespace gfn::kernels {

struct ConvParams {
  int stride = 1;
  int padding = 0;
};

/// floor((in + 2p - k) / s) + 1
std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, const ConvParams& p);
/// (in - 1) * s - 2p + k
std::int64_t conv_transpose_out_extent(std::int64_t in, std::int64_t k, const ConvParams& p);

/// weight (outC, inC, kH, kW); bias (1, outC, 1, 1) or nullptr.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvParams& p);

/// Accumulates into every non-null gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, const ConvParams& p,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

/// weight (inC, outC, kH, kW); adjoint of conv2d with the same weight.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvParams& p);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                               const ConvParams& p, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Bicubic resampling (a = -0.5) with edge clamping. When shrinking, the
/// kernel is widened by the inverse scale (antialiasing), so constant
/// images stay constant for any target size.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);

/// Transpose of bicubic_resize: maps an output-sized gradient back to the
/// input grid.
template <typename T>
Tensor<T> bicubic_resize_backward(const Tensor<T>& dy, std::int64_t in_h, std::int64_t in_w);

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

}  // namespace gfn::kernels
