#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "gfn/autograd.hpp"
#include "gfn/kernels.hpp"

// Differentiable operators. Each records its result on the graph of its
// first operand; all operands must live on the same graph.

namespace gfn::ops {

using kernels::ConvParams;

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, ConvParams p = {});

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
                        ConvParams p = {});

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r);

/// max(x, slope * x)
template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

enum class Broadcast {
  none,     ///< shapes must match exactly
  channels  ///< b has one channel, applied to every channel of a
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b, Broadcast mode = Broadcast::none);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b, Broadcast mode = Broadcast::none);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, double factor);

/// Concatenation along the channel axis.
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// mean((a - b)^2) as a (1,1,1,1) tensor.
template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> bicubic_resize(const Var<T>& x, std::int64_t out_h, std::int64_t out_w);

/// Exact rational scale factor num/den.
struct Scale {
  std::int64_t num = 1;
  std::int64_t den = 1;
};

/// Target extent in * num / den; throws unless it is a positive integer.
std::int64_t scaled_extent(std::int64_t in, Scale s);

template <typename T>
Var<T> bicubic_resize(const Var<T>& x, Scale s);

}  // namespace gfn::ops
