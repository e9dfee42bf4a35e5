#include "gfn/adam.hpp"

#include <cmath>

namespace gfn {

template <typename T>
void adam_step(std::map<std::string, Tensor<T>*>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double lr) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("adam_step: gradient for unknown parameter " + name);
    if (!(it->second->shape() == g.shape())) {
      throw ShapeError("adam_step: gradient shape " + g.shape().str() + " != parameter shape " +
                       it->second->shape().str() + " for " + name);
    }
    for (auto* moments : {&state.first_moment, &state.second_moment}) {
      auto m = moments->find(name);
      if (m == moments->end()) {
        moments->emplace(name, Tensor<T>(g.shape()));
      } else if (!(m->second.shape() == g.shape())) {
        throw ShapeError("adam_step: moment shape " + m->second.shape().str() + " != parameter shape " +
                         g.shape().str() + " for " + name);
      }
    }
  }

  state.step += 1;
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = *params.at(name);
    Tensor<T>& m = state.first_moment.at(name);
    Tensor<T>& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + state.hyper.eps));
    }
  }
}

template void adam_step(std::map<std::string, Tensor<float>*>&, const std::map<std::string, Tensor<float>>&,
                        AdamState<float>&, double);
template void adam_step(std::map<std::string, Tensor<double>*>&, const std::map<std::string, Tensor<double>>&,
                        AdamState<double>&, double);

}  // namespace gfn
