#include "gfn/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "gfn/ops.hpp"
#include "gfn/random.hpp"

namespace gfn {
namespace {

constexpr int kEncoderBlocks = 6;
constexpr int kSrfBlocks = 8;
constexpr int kReconBlocks = 8;
constexpr int kImageChannels = 3;

constexpr std::array<Variant, 7> kVariants = {Variant::baseline, Variant::model1, Variant::model2, Variant::model3,
                                              Variant::model4,   Variant::model5, Variant::gfn};

class SpecBuilder {
 public:
  explicit SpecBuilder(std::vector<ParamSpec>& out) : out_(out) {}

  void conv(const std::string& name, ParamGroup g, std::int64_t in, std::int64_t out, std::int64_t k) {
    out_.push_back({name + "/weight", g, {out, in, k, k}, in * k * k, false});
    out_.push_back({name + "/bias", g, {1, out, 1, 1}, in * k * k, true});
  }
  void deconv(const std::string& name, ParamGroup g, std::int64_t in, std::int64_t out, std::int64_t k) {
    out_.push_back({name + "/weight", g, {in, out, k, k}, in * k * k, false});
    out_.push_back({name + "/bias", g, {1, out, 1, 1}, in * k * k, true});
  }
  void resblocks(const std::string& prefix, ParamGroup g, int count, std::int64_t ch) {
    for (int i = 0; i < count; ++i) {
      const std::string rb = prefix + "/rb" + std::to_string(i);
      conv(rb + "/conv1", g, ch, ch, 3);
      conv(rb + "/conv2", g, ch, ch, 3);
    }
  }

 private:
  std::vector<ParamSpec>& out_;
};

bool has_deblur_image(const ModelConfig& cfg) {
  return traits(cfg.variant).deblur_module && cfg.variant != Variant::model4;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

template <typename T>
Var<T> conv(Binder<T>& p, const std::string& name, const Var<T>& x, int stride = 1) {
  const Var<T> w = p(name + "/weight");
  const int k = static_cast<int>(w.shape().h);
  return ops::conv2d(x, w, std::optional<Var<T>>(p(name + "/bias")), {stride, (k - 1) / 2});
}

template <typename T>
Var<T> conv_lrelu(Binder<T>& p, const std::string& name, const Var<T>& x, int stride = 1) {
  return ops::leaky_relu(conv(p, name, x, stride), kLeakySlope);
}

template <typename T>
Var<T> deconv_lrelu(Binder<T>& p, const std::string& name, const Var<T>& x) {
  const Var<T> y =
      ops::conv_transpose2d(x, p(name + "/weight"), std::optional<Var<T>>(p(name + "/bias")), {2, 1});
  return ops::leaky_relu(y, kLeakySlope);
}

template <typename T>
Var<T> resblocks(Binder<T>& p, const std::string& prefix, int count, Var<T> x, double res_scale) {
  for (int i = 0; i < count; ++i) x = resblock_forward(p, prefix + "/rb" + std::to_string(i), x, res_scale);
  return x;
}

// Two 3x3 convolutions producing a 3-channel image.
template <typename T>
Var<T> image_tail(Binder<T>& p, const std::string& prefix, const Var<T>& x) {
  return conv(p, prefix + "/conv1", conv_lrelu(p, prefix + "/conv0", x));
}

}  // namespace

VariantTraits traits(Variant v) {
  switch (v) {
    case Variant::baseline: return {true, false, false, false, false, false};
    case Variant::model1: return {true, true, false, false, false, false};
    case Variant::model2: return {false, true, false, false, false, true};
    case Variant::model3: return {true, true, true, false, false, false};
    case Variant::model4: return {false, true, true, true, false, false};
    case Variant::model5: return {true, true, true, true, false, false};
    case Variant::gfn: return {true, true, true, true, true, false};
  }
  throw std::invalid_argument("unknown variant");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "Baseline";
    case Variant::model1: return "Model1";
    case Variant::model2: return "Model2";
    case Variant::model3: return "Model3";
    case Variant::model4: return "Model4";
    case Variant::model5: return "Model5";
    case Variant::gfn: return "GFN";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  const std::string key = lower(name);
  for (Variant v : kVariants) {
    if (lower(variant_name(v)) == key) return v;
  }
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

std::span<const Variant> all_variants() { return kVariants; }

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::deblur: return "deblur";
    case ParamGroup::srf: return "srf";
    case ParamGroup::gate: return "gate";
    case ParamGroup::recon: return "recon";
  }
  return "?";
}

ModelConfig ModelConfig::tiny(Variant v) {
  ModelConfig cfg;
  cfg.width = 16;
  cfg.variant = v;
  return cfg;
}

void ModelConfig::validate() const {
  if (width < 4 || width % 4 != 0) {
    throw std::invalid_argument("model width must be >= 4 and divisible by 4, got " + std::to_string(width));
  }
  if (!(res_scale > 0.0) || !std::isfinite(res_scale)) {
    throw std::invalid_argument("res_scale must be positive and finite");
  }
}

void require_divisible_by_4(const Shape& s, const char* what) {
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError(std::string(what) + ": input height and width must be divisible by 4, got " +
                     std::to_string(s.h) + "x" + std::to_string(s.w));
  }
}

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  const VariantTraits t = traits(cfg.variant);
  const std::int64_t w = cfg.width;
  std::vector<ParamSpec> specs;
  SpecBuilder b(specs);

  if (t.deblur_module) {
    const auto g = ParamGroup::deblur;
    b.conv("deblur/head", g, kImageChannels, w, 7);
    b.resblocks("deblur/enc/s0", g, kEncoderBlocks, w);
    b.conv("deblur/enc/down0", g, w, 2 * w, 3);
    b.resblocks("deblur/enc/s1", g, kEncoderBlocks, 2 * w);
    b.conv("deblur/enc/down1", g, 2 * w, 4 * w, 3);
    b.resblocks("deblur/enc/s2", g, kEncoderBlocks, 4 * w);
    b.deconv("deblur/dec/up0", g, 4 * w, 2 * w, 4);
    b.deconv("deblur/dec/up1", g, 2 * w, w, 4);
    if (has_deblur_image(cfg)) {
      b.conv("deblur/tail/conv0", g, w, w, 3);
      b.conv("deblur/tail/conv1", g, w, kImageChannels, 3);
    }
  }

  const std::int64_t srf_in = cfg.variant == Variant::model3 ? 2 * kImageChannels : kImageChannels;
  b.conv("srf/head", ParamGroup::srf, srf_in, w, 7);
  b.resblocks("srf", ParamGroup::srf, kSrfBlocks, w);
  if (cfg.variant == Variant::baseline) {
    b.conv("srf/lhat/conv0", ParamGroup::srf, w, w, 3);
    b.conv("srf/lhat/conv1", ParamGroup::srf, w, kImageChannels, 3);
  }

  if (t.gate) {
    b.conv("gate/conv0", ParamGroup::gate, 2 * w + kImageChannels, w, 3);
    b.conv("gate/conv1", ParamGroup::gate, w, w, 1);
  }

  const auto g = ParamGroup::recon;
  b.resblocks("recon", g, kReconBlocks, w);
  b.conv("recon/up0", g, w, 4 * w, 3);
  b.conv("recon/up1", g, w, 4 * w, 3);
  b.conv("recon/tail/conv0", g, w, w, 3);
  b.conv("recon/tail/conv1", g, w, kImageChannels, 7);
  return specs;
}

// ---------------------------------------------------------------------------
// ParamSet

template <typename T>
void ParamSet<T>::add(std::string name, ParamGroup group, Tensor<T> value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  names_.push_back(name);
  index_.emplace(std::move(name), Entry{group, std::move(value)});
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second.value;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second.value;
}

template <typename T>
ParamGroup ParamSet<T>::group(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second.group;
}

template <typename T>
std::int64_t ParamSet<T>::count() const {
  std::int64_t total = 0;
  for (const auto& [_, e] : index_) total += static_cast<std::int64_t>(e.value.size());
  return total;
}

template <typename T>
std::int64_t ParamSet<T>::count(ParamGroup g) const {
  std::int64_t total = 0;
  for (const auto& [_, e] : index_) {
    if (e.group == g) total += static_cast<std::int64_t>(e.value.size());
  }
  return total;
}

template <typename T>
bool ParamSet<T>::operator==(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (const auto& n : names_) {
    if (group(n) != other.group(n) || !(at(n) == other.at(n))) return false;
  }
  return true;
}

template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamSet<T> params;
  for (const ParamSpec& spec : param_specs(cfg)) {
    Tensor<T> value(spec.shape);
    if (!spec.is_bias) {
      Rng rng(derive_seed(seed, "init:" + spec.name));
      const double stddev = 1.0 / std::sqrt(3.0 * static_cast<double>(spec.fan_in));
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<T>(stddev * rng.normal());
    }
    params.add(spec.name, spec.group, std::move(value));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Binder

template <typename T>
Binder<T>::Binder(Graph<T>& graph, const ParamSet<T>& params, Trainable trainable)
    : graph_(graph), params_(params), trainable_(std::move(trainable)) {}

template <typename T>
Var<T> Binder<T>::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const bool train = trainable_ ? trainable_(name) : true;
  Var<T> v = graph_.leaf(params_.at(name), train);
  bound_.emplace(name, v);
  return v;
}

template <typename T>
std::map<std::string, Tensor<T>> Binder<T>::gradients() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, v] : bound_) {
    if (graph_.requires_grad(v.id())) out.emplace(name, graph_.grad(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Modules

template <typename T>
Var<T> resblock_forward(Binder<T>& p, const std::string& prefix, const Var<T>& x, double res_scale) {
  const Var<T> h = conv(p, prefix + "/conv2", conv_lrelu(p, prefix + "/conv1", x));
  return ops::add(x, ops::scale(h, res_scale));
}

template <typename T>
DeblurOutput<T> deblur_forward(Binder<T>& p, const Var<T>& input, const ModelConfig& cfg, bool with_image) {
  require_divisible_by_4(input.shape(), "deblur_forward");
  const double rs = cfg.res_scale;
  const Var<T> head = conv_lrelu(p, "deblur/head", input);
  const Var<T> s0 = ops::add(resblocks(p, "deblur/enc/s0", kEncoderBlocks, head, rs), head);
  const Var<T> d0 = conv_lrelu(p, "deblur/enc/down0", s0, 2);
  const Var<T> s1 = ops::add(resblocks(p, "deblur/enc/s1", kEncoderBlocks, d0, rs), d0);
  const Var<T> d1 = conv_lrelu(p, "deblur/enc/down1", s1, 2);
  const Var<T> s2 = ops::add(resblocks(p, "deblur/enc/s2", kEncoderBlocks, d1, rs), d1);
  const Var<T> u0 = ops::add(deconv_lrelu(p, "deblur/dec/up0", s2), s1);
  const Var<T> u1 = ops::add(deconv_lrelu(p, "deblur/dec/up1", u0), s0);
  DeblurOutput<T> out{u1, std::nullopt};
  if (with_image) out.image = image_tail(p, "deblur/tail", u1);
  return out;
}

template <typename T>
Var<T> srf_forward(Binder<T>& p, const Var<T>& input, const ModelConfig& cfg) {
  const Var<T> head = conv_lrelu(p, "srf/head", input);
  return resblocks(p, "srf", kSrfBlocks, head, cfg.res_scale);
}

template <typename T>
GateOutput<T> gate_fuse(Binder<T>& p, const Var<T>& phi_srf, const Var<T>& phi_deblur, const Var<T>& lblur,
                        const ModelConfig& cfg, const ForwardOptions& opts) {
  const Shape fs = phi_srf.shape();
  const Shape ds = phi_deblur.shape();
  const Shape is = lblur.shape();
  if (!(fs == ds)) throw ShapeError("gate_fuse: phi_srf " + fs.str() + " != phi_deblur " + ds.str());
  if (is.h != fs.h) throw ShapeError("gate_fuse: image height " + std::to_string(is.h) + " != feature height");
  if (is.w != fs.w) throw ShapeError("gate_fuse: image width " + std::to_string(is.w) + " != feature width");
  if (is.n != fs.n) throw ShapeError("gate_fuse: image batch " + std::to_string(is.n) + " != feature batch");

  if (opts.fusion == FusionMode::direct_sum) return {ops::add(phi_deblur, phi_srf), std::nullopt};

  Var<T> mask;
  if (opts.fusion == FusionMode::forced_mask) {
    mask = p.graph().leaf(Tensor<T>(fs, static_cast<T>(opts.forced_mask)), false);
  } else {
    const std::array<Var<T>, 3> parts{phi_srf, phi_deblur, lblur};
    const Var<T> cat = ops::concat_channels<T>(parts);
    mask = conv(p, "gate/conv1", conv_lrelu(p, "gate/conv0", cat));
    if (cfg.gate_activation == GateActivation::sigmoid) mask = ops::sigmoid(mask);
  }
  return {ops::add(ops::mul(mask, phi_deblur), phi_srf), mask};
}

template <typename T>
Var<T> recon_forward(Binder<T>& p, const Var<T>& phi_fusion, const ModelConfig& cfg) {
  if (phi_fusion.shape().c != cfg.width) {
    throw ShapeError("recon_forward: expected " + std::to_string(cfg.width) + " channels, got " +
                     std::to_string(phi_fusion.shape().c));
  }
  Var<T> x = resblocks(p, "recon", kReconBlocks, phi_fusion, cfg.res_scale);
  x = ops::leaky_relu(ops::pixel_shuffle(conv(p, "recon/up0", x), 2), kLeakySlope);
  x = ops::leaky_relu(ops::pixel_shuffle(conv(p, "recon/up1", x), 2), kLeakySlope);
  return image_tail(p, "recon/tail", x);
}

template <typename T>
ModelOutput<T> gfn_forward(Binder<T>& p, const Var<T>& lblur, const ModelConfig& cfg, const ForwardOptions& opts) {
  cfg.validate();
  require_divisible_by_4(lblur.shape(), "gfn_forward");
  if (lblur.shape().c != kImageChannels) {
    throw ShapeError("gfn_forward: expected 3 input channels, got " + std::to_string(lblur.shape().c));
  }
  ModelOutput<T> out;
  switch (cfg.variant) {
    case Variant::gfn:
    case Variant::model4:
    case Variant::model5: {
      const DeblurOutput<T> db = deblur_forward(p, lblur, cfg, has_deblur_image(cfg));
      const Var<T> srf = srf_forward(p, lblur, cfg);
      ForwardOptions fo = opts;
      if (cfg.variant != Variant::gfn) fo.fusion = FusionMode::direct_sum;
      const GateOutput<T> gate = gate_fuse(p, srf, db.features, lblur, cfg, fo);
      out.hr = recon_forward(p, gate.fused, cfg);
      out.lr = db.image;
      out.mask = gate.mask;
      out.phi_srf = srf;
      out.phi_deblur = db.features;
      out.phi_fusion = gate.fused;
      break;
    }
    case Variant::model3: {
      const DeblurOutput<T> db = deblur_forward(p, lblur, cfg, true);
      const std::array<Var<T>, 2> parts{*db.image, lblur};
      const Var<T> srf = srf_forward(p, ops::concat_channels<T>(parts), cfg);
      out.hr = recon_forward(p, srf, cfg);
      out.lr = db.image;
      out.phi_srf = srf;
      out.phi_deblur = db.features;
      break;
    }
    case Variant::model1: {
      const DeblurOutput<T> db = deblur_forward(p, lblur, cfg, true);
      const Var<T> srf = srf_forward(p, *db.image, cfg);
      out.hr = recon_forward(p, srf, cfg);
      out.lr = db.image;
      out.phi_srf = srf;
      out.phi_deblur = db.features;
      break;
    }
    case Variant::model2: {
      const Var<T> srf = srf_forward(p, lblur, cfg);
      const Var<T> sr = recon_forward(p, srf, cfg);
      const DeblurOutput<T> db = deblur_forward(p, sr, cfg, true);
      out.hr = *db.image;
      out.phi_srf = srf;
      out.phi_deblur = db.features;
      break;
    }
    case Variant::baseline: {
      const Var<T> srf = srf_forward(p, lblur, cfg);
      out.lr = image_tail(p, "srf/lhat", srf);
      out.hr = recon_forward(p, srf, cfg);
      out.phi_srf = srf;
      break;
    }
  }
  return out;
}

Prediction predict(const ParamSet<float>& params, const ModelConfig& cfg, const Tensor<float>& lblur,
                   const ForwardOptions& opts) {
  Graph<float> graph(false);
  Binder<float> binder(graph, params);
  const Var<float> x = graph.leaf(lblur);
  const ModelOutput<float> out = gfn_forward(binder, x, cfg, opts);
  Prediction pred{out.hr.value(), std::nullopt};
  if (out.lr) pred.lr = out.lr->value();
  return pred;
}

#define GFN_INSTANTIATE_MODEL(T)                                                                              \
  template class ParamSet<T>;                                                                                 \
  template class Binder<T>;                                                                                   \
  template ParamSet<T> init_params(const ModelConfig&, std::uint64_t);                                        \
  template Var<T> resblock_forward(Binder<T>&, const std::string&, const Var<T>&, double);                    \
  template DeblurOutput<T> deblur_forward(Binder<T>&, const Var<T>&, const ModelConfig&, bool);               \
  template Var<T> srf_forward(Binder<T>&, const Var<T>&, const ModelConfig&);                                 \
  template GateOutput<T> gate_fuse(Binder<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const ModelConfig&, \
                                   const ForwardOptions&);                                                    \
  template Var<T> recon_forward(Binder<T>&, const Var<T>&, const ModelConfig&);                               \
  template ModelOutput<T> gfn_forward(Binder<T>&, const Var<T>&, const ModelConfig&, const ForwardOptions&);

GFN_INSTANTIATE_MODEL(float)
GFN_INSTANTIATE_MODEL(double)

}  // namespace gfn
