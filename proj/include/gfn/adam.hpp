#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gfn/tensor.hpp"

namespace gfn {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moment estimates keyed by parameter name.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

/// One bias-corrected Adam update over every parameter that has a gradient.
/// Parameters absent from `grads` are left untouched (frozen). Moments are
/// created on first use.
template <typename T>
void adam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double lr);

}  // namespace gfn
