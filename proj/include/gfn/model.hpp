#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gfn/autograd.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

/// Network configurations of the component ablation, in table order.
enum class Variant {
  baseline,  ///< single SR branch with an auxiliary deblurred-LR head
  model1,    ///< deblur, then SR (sequential, LR space)
  model2,    ///< SR, then deblur (sequential, HR space)
  model3,    ///< dual branch, deblurred image fused at intensity level
  model4,    ///< dual branch, feature-level sum, no deblurring loss
  model5,    ///< dual branch, feature-level sum
  gfn,       ///< dual branch, gated feature fusion
};

struct VariantTraits {
  bool deblur_loss;
  bool deblur_module;
  bool dual_branch;
  bool feature_level;
  bool gate;
  bool sr_first;
};

VariantTraits traits(Variant v);
std::string_view variant_name(Variant v);
/// Accepts the names produced by variant_name (case-insensitive).
Variant parse_variant(std::string_view name);
std::span<const Variant> all_variants();

enum class GateActivation { sigmoid, linear };
enum class ParamGroup { deblur, srf, gate, recon };
std::string_view group_name(ParamGroup g);

inline constexpr double kLeakySlope = 0.2;

struct ModelConfig {
  /// Base feature width. Encoder scales use width, 2*width, 4*width.
  int width = 64;
  Variant variant = Variant::gfn;
  GateActivation gate_activation = GateActivation::sigmoid;
  /// Multiplier on each ResBlock's residual branch.
  double res_scale = 0.1;

  static ModelConfig tiny(Variant v = Variant::gfn);
  /// Throws ConfigError-style std::invalid_argument on bad widths.
  void validate() const;
};

/// One learnable tensor of the architecture.
struct ParamSpec {
  std::string name;
  ParamGroup group;
  Shape shape;
  std::int64_t fan_in;
  bool is_bias;
};

/// Every parameter the configured variant uses, in a stable order.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

template <typename T>
class ParamSet {
 public:
  void add(std::string name, ParamGroup group, Tensor<T> value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  ParamGroup group(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  /// Exact number of scalar parameters, overall or per group.
  std::int64_t count() const;
  std::int64_t count(ParamGroup g) const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& n : names_) out.add(n, group(n), at(n).template cast<U>());
    return out;
  }

  bool operator==(const ParamSet& other) const;

 private:
  struct Entry {
    ParamGroup group;
    Tensor<T> value;
  };
  std::vector<std::string> names_;
  std::map<std::string, Entry> index_;
};

/// Weights Gaussian with standard deviation 1/sqrt(3 fan_in), zero biases. Each tensor is
/// drawn from its own stream keyed by (seed, name), so variants that share a
/// parameter name start from identical values.
template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Binds parameters into a graph as leaves on first use.
template <typename T>
class Binder {
 public:
  using Trainable = std::function<bool(const std::string&)>;

  Binder(Graph<T>& graph, const ParamSet<T>& params, Trainable trainable = {});

  Var<T> operator()(const std::string& name);
  Graph<T>& graph() { return graph_; }
  const std::map<std::string, Var<T>>& bound() const { return bound_; }

  /// Gradients (after backward) of every bound trainable parameter.
  std::map<std::string, Tensor<T>> gradients() const;

 private:
  Graph<T>& graph_;
  const ParamSet<T>& params_;
  Trainable trainable_;
  std::map<std::string, Var<T>> bound_;
};

enum class FusionMode {
  gated,       ///< learned mask
  direct_sum,  ///< phi_deblur + phi_srf, gate disabled
  forced_mask  ///< constant mask value, for testing the fusion algebra
};

struct ForwardOptions {
  FusionMode fusion = FusionMode::gated;
  double forced_mask = 0.0;
};

template <typename T>
struct DeblurOutput {
  Var<T> features;
  std::optional<Var<T>> image;
};

template <typename T>
struct GateOutput {
  Var<T> fused;
  std::optional<Var<T>> mask;
};

template <typename T>
struct ModelOutput {
  Var<T> hr;
  std::optional<Var<T>> lr;
  std::optional<Var<T>> mask;
  std::optional<Var<T>> phi_srf;
  std::optional<Var<T>> phi_deblur;
  std::optional<Var<T>> phi_fusion;
};

template <typename T>
Var<T> resblock_forward(Binder<T>& p, const std::string& prefix, const Var<T>& x, double res_scale);

/// Asymmetric residual encoder-decoder. Input height and width must be
/// divisible by 4.
template <typename T>
DeblurOutput<T> deblur_forward(Binder<T>& p, const Var<T>& input, const ModelConfig& cfg, bool with_image);

template <typename T>
Var<T> srf_forward(Binder<T>& p, const Var<T>& input, const ModelConfig& cfg);

/// phi_fusion = mask * phi_deblur + phi_srf
template <typename T>
GateOutput<T> gate_fuse(Binder<T>& p, const Var<T>& phi_srf, const Var<T>& phi_deblur, const Var<T>& lblur,
                        const ModelConfig& cfg, const ForwardOptions& opts);

/// 8 ResBlocks, two conv + x2 pixel-shuffle stages, two tail convolutions.
template <typename T>
Var<T> recon_forward(Binder<T>& p, const Var<T>& phi_fusion, const ModelConfig& cfg);

template <typename T>
ModelOutput<T> gfn_forward(Binder<T>& p, const Var<T>& lblur, const ModelConfig& cfg,
                           const ForwardOptions& opts = {});

struct Prediction {
  Tensor<float> hr;
  std::optional<Tensor<float>> lr;
};

/// Forward pass without gradient recording.
Prediction predict(const ParamSet<float>& params, const ModelConfig& cfg, const Tensor<float>& lblur,
                   const ForwardOptions& opts = {});

/// Throws ShapeError unless height and width are divisible by 4.
void require_divisible_by_4(const Shape& s, const char* what);

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace gfn
