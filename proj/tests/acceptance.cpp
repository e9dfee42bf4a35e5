// Acceptance suite. Prints one [PASS]/[FAIL] line per criterion; the exit
// status is non-zero when any selected criterion fails.
//
//   gfn_acceptance            run everything
//   gfn_acceptance --only 4   run one criterion (repeatable)

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "gfn/checkpoint.hpp"
#include "gfn/metrics.hpp"
#include "gfn/runtime.hpp"
#include "oracles.hpp"

using namespace gfn;
using oracle::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

// ---------------------------------------------------------------------------

using VarList = std::vector<Var<double>>;
using OpFn = std::function<Var<double>(Graph<double>&, const VarList&)>;

struct GradCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  OpFn f;
};

std::vector<GradCase> gradient_cases() {
  using ops::Broadcast;
  const auto a = random_tensor({1, 3, 4, 4}, 13), b = random_tensor({1, 3, 4, 4}, 14);
  const auto m = random_tensor({1, 1, 4, 4}, 15);
  const auto h = random_tensor({1, 3, 4, 4}, 3), l = random_tensor({1, 3, 1, 1}, 4);
  std::vector<GradCase> c;
  for (auto [s, p] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
    c.push_back({"conv2d s" + std::to_string(s) + "p" + std::to_string(p),
                 {random_tensor({1, 2, 5, 5}, 1), random_tensor({2, 2, 3, 3}, 2), random_tensor({1, 2, 1, 1}, 3)},
                 [s, p](Graph<double>&, const VarList& v) {
                   return ops::conv2d(v[0], v[1], std::optional(v[2]), {s, p});
                 }});
  }
  c.push_back({"conv2d 7x7", {random_tensor({1, 1, 7, 7}, 4), random_tensor({2, 1, 7, 7}, 5)},
               [](Graph<double>&, const VarList& v) {
                 return ops::conv2d(v[0], v[1], std::optional<Var<double>>(), {1, 3});
               }});
  c.push_back({"conv2d 1x1", {random_tensor({1, 3, 4, 4}, 6), random_tensor({2, 3, 1, 1}, 7)},
               [](Graph<double>&, const VarList& v) {
                 return ops::conv2d(v[0], v[1], std::optional<Var<double>>(), {1, 0});
               }});
  c.push_back({"conv_transpose2d",
               {random_tensor({1, 2, 3, 3}, 6), random_tensor({2, 2, 4, 4}, 7), random_tensor({1, 2, 1, 1}, 8)},
               [](Graph<double>&, const VarList& v) {
                 return ops::conv_transpose2d(v[0], v[1], std::optional(v[2]), {2, 1});
               }});
  c.push_back({"pixel_shuffle", {random_tensor({1, 8, 3, 3}, 9)},
               [](Graph<double>&, const VarList& v) { return ops::pixel_shuffle(v[0], 2); }});
  c.push_back({"pixel_unshuffle", {random_tensor({1, 2, 4, 6}, 10)},
               [](Graph<double>&, const VarList& v) { return ops::pixel_unshuffle(v[0], 2); }});
  c.push_back({"leaky_relu", {random_tensor({1, 2, 5, 5}, 11)},
               [](Graph<double>&, const VarList& v) { return ops::leaky_relu(v[0], kLeakySlope); }});
  c.push_back({"sigmoid", {random_tensor({1, 2, 5, 5}, 12, -4, 4)},
               [](Graph<double>&, const VarList& v) { return ops::sigmoid(v[0]); }});
  c.push_back({"add", {a, b}, [](Graph<double>&, const VarList& v) { return ops::add(v[0], v[1]); }});
  c.push_back({"sub", {a, b}, [](Graph<double>&, const VarList& v) { return ops::sub(v[0], v[1]); }});
  c.push_back({"mul", {a, b}, [](Graph<double>&, const VarList& v) { return ops::mul(v[0], v[1]); }});
  c.push_back({"add broadcast", {a, m},
               [](Graph<double>&, const VarList& v) { return ops::add(v[0], v[1], Broadcast::channels); }});
  c.push_back({"mul broadcast", {a, m},
               [](Graph<double>&, const VarList& v) { return ops::mul(v[0], v[1], Broadcast::channels); }});
  c.push_back({"scale", {a}, [](Graph<double>&, const VarList& v) { return ops::scale(v[0], -0.3); }});
  c.push_back({"concat_channels", {random_tensor({1, 2, 4, 4}, 16), random_tensor({1, 3, 4, 4}, 17)},
               [](Graph<double>&, const VarList& v) {
                 const std::array<Var<double>, 2> parts{v[0], v[1]};
                 return ops::concat_channels<double>(parts);
               }});
  c.push_back({"sum", {a}, [](Graph<double>&, const VarList& v) { return ops::sum(v[0]); }});
  c.push_back({"mean", {a}, [](Graph<double>&, const VarList& v) { return ops::mean(v[0]); }});
  c.push_back({"mse_loss", {a, b}, [](Graph<double>&, const VarList& v) { return ops::mse_loss(v[0], v[1]); }});
  c.push_back({"bicubic down", {random_tensor({1, 2, 8, 8}, 19)},
               [](Graph<double>&, const VarList& v) { return ops::bicubic_resize(v[0], 2, 2); }});
  c.push_back({"bicubic up", {random_tensor({1, 1, 4, 5}, 20)},
               [](Graph<double>&, const VarList& v) { return ops::bicubic_resize(v[0], 7, 9); }});
  c.push_back({"training loss", {random_tensor({1, 3, 4, 4}, 5), random_tensor({1, 3, 1, 1}, 6)},
               [h, l](Graph<double>& g, const VarList& v) {
                 return compute_loss<double>(v[0], g.leaf(h), v[1], g.leaf(l), 0.5).total;
               }});
  return c;
}

Outcome ac1_gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  int n = 0;
  for (const auto& c : gradient_cases()) {
    std::size_t elements = 0;
    for (const auto& t : c.inputs) elements += t.size();
    o.require(elements <= 200, c.name + " has more than 200 input elements");
    const auto r = oracle::grad_check(c.inputs, c.f);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
    }
    o.require(r.max_rel_error < 1e-4, c.name);
    ++n;
  }

  ModelConfig cfg;
  cfg.width = 4;
  const auto params = oracle::random_params(cfg, 71, 0.3);
  const std::vector<std::string> probe{"deblur/head/bias",       "deblur/enc/s1/rb2/conv1/bias", "deblur/dec/up0/bias",
                                       "deblur/tail/conv1/bias", "srf/rb7/conv2/weight",         "gate/conv1/weight",
                                       "gate/conv0/bias",        "recon/up1/bias",               "recon/tail/conv1/bias"};
  for (const auto& p : probe) o.require(params.at(p).size() <= 200, p + " too large");
  const auto model = oracle::model_grad_check(params, cfg, random_tensor({1, 3, 4, 4}, 72, 0, 1), probe);
  o.require(model.max_rel_error < 1e-4, "full GFN forward");
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime");
  o.detail << "operators=" << n << " worst_op=" << worst << " (" << worst_name << ") gfn=" << model.max_rel_error
           << " over " << model.elements << " elements, " << secs << " s";
  return o;
}

// ---------------------------------------------------------------------------

template <typename T>
void check_fusion(const ParamSet<T>& params, const ModelConfig& cfg, const Tensor<T>& input, double& worst,
                  double& mask_lo, double& mask_hi) {
  Graph<T> g(false);
  Binder<T> b(g, params);
  const auto out = gfn_forward(b, g.leaf(input), cfg);
  const auto& m = out.mask->value();
  const auto& f = out.phi_fusion->value();
  const auto& s = out.phi_srf->value();
  const auto& d = out.phi_deblur->value();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double lhs = static_cast<double>(f[i]) - static_cast<double>(s[i]);
    const double rhs = static_cast<double>(m[i]) * static_cast<double>(d[i]);
    worst = std::max(worst, std::abs(lhs - rhs));
    mask_lo = std::min(mask_lo, static_cast<double>(m[i]));
    mask_hi = std::max(mask_hi, static_cast<double>(m[i]));
  }
}

Outcome ac2_fusion() {
  Outcome o;
  std::mt19937_64 rng(2024);
  auto pick = [&](std::initializer_list<int> xs) { return *(xs.begin() + rng() % xs.size()); };
  double worst = 0.0, mask_lo = 1.0, mask_hi = 0.0;
  int configs = 0;
  for (int k = 0; k < 100; ++k) {
    ModelConfig cfg;
    cfg.width = pick({4, 8});
    const Shape in{pick({1, 2}), 3, pick({4, 8, 12}), pick({4, 8, 12})};
    const std::uint64_t seed = 1000 + k;
    if (k % 2 == 0) {
      // random weights in double, uniform in +-gain/sqrt(fan_in), random biases
      const double gain = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
      ParamSet<double> params;
      std::uint64_t stream = seed * 1000;
      for (const auto& spec : param_specs(cfg)) {
        const double bound = spec.is_bias ? 0.2 : gain / std::sqrt(static_cast<double>(spec.fan_in));
        params.add(spec.name, spec.group, random_tensor(spec.shape, stream++, -bound, bound));
      }
      check_fusion(params, cfg, random_tensor(in, seed, 0, 1), worst, mask_lo, mask_hi);
    } else {
      // the library's own float initialization
      check_fusion(init_params<float>(cfg, seed), cfg, random_tensor<float>(in, seed, 0, 1), worst, mask_lo,
                   mask_hi);
    }
    ++configs;
  }
  o.require(worst <= 1e-6, "fusion residual");
  o.require(mask_lo > 0.0 && mask_hi < 1.0, "mask range");

  // forced masks: 0 leaves phi_srf, 1 adds phi_deblur, both exactly
  bool exact = true;
  for (int k = 0; k < 10; ++k) {
    ModelConfig cfg;
    cfg.width = 4;
    const auto params = oracle::random_params(cfg, 3000 + k, 0.3);
    for (double mv : {0.0, 1.0}) {
      Graph<double> g(false);
      Binder<double> b(g, params);
      ForwardOptions fo;
      fo.fusion = FusionMode::forced_mask;
      fo.forced_mask = mv;
      const auto out = gfn_forward(b, g.leaf(random_tensor({1, 3, 8, 8}, 4000 + k, 0, 1)), cfg, fo);
      const auto& f = out.phi_fusion->value();
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double expect = mv == 0.0 ? out.phi_srf->value()[i] : out.phi_srf->value()[i] + out.phi_deblur->value()[i];
        exact &= f[i] == expect;
      }
    }
  }
  o.require(exact, "forced mask limits");
  o.detail << "configs=" << configs << " max|fusion-srf-m*deblur|=" << worst << " min(mask)=" << mask_lo
           << " 1-max(mask)=" << 1.0 - mask_hi << " forced_limits_exact=" << (exact ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac3_shapes() {
  Outcome o;
  const std::vector<std::pair<int, int>> sizes{{64, 64}, {48, 80}, {128, 128}};
  std::vector<ModelConfig> configs;
  for (Variant v : all_variants()) configs.push_back(ModelConfig::tiny(v));
  configs.push_back(ModelConfig{});  // full width GFN
  int checked = 0;
  for (const auto& cfg : configs) {
    const auto params = init_params<float>(cfg, 1);
    for (auto [h, w] : sizes) {
      const auto p = predict(params, cfg, random_tensor<float>({1, 3, h, w}, 5, 0, 1));
      const std::string tag = std::string(variant_name(cfg.variant)) + "/W" + std::to_string(cfg.width) + " " +
                              std::to_string(h) + "x" + std::to_string(w);
      o.require(p.hr.shape() == Shape({1, 3, 4 * h, 4 * w}), tag + " hr");
      if (traits(cfg.variant).deblur_loss) {
        o.require(p.lr.has_value() && p.lr->shape() == Shape({1, 3, h, w}), tag + " lr");
      }
      ++checked;
    }
    bool rejected = false;
    try {
      predict(params, cfg, Tensor<float>({1, 3, 66, 64}));
    } catch (const ShapeError&) {
      rejected = true;
    }
    o.require(rejected, std::string(variant_name(cfg.variant)) + " accepted 66x64");
  }
  o.detail << "forward passes=" << checked << " (7 variants at W=16, GFN at W=64), 66x64 input rejected";
  return o;
}

// ---------------------------------------------------------------------------

constexpr double kOverfitLr = 1e-3;

Outcome ac4_overfit() {
  Outcome o;
  const std::vector<Image> imgs{synth_scene("a", 256, 256, 7), synth_scene("b", 256, 256, 7)};
  TripletOptions to;
  to.scales_per_image = 1;
  to.min_scale = to.max_scale = 1.0;
  to.crop = to.stride = 256;
  to.seed = 1;
  const auto data = make_triplets(imgs, to).triplets;
  o.require(data.size() == 2 && data[0].l.shape() == Shape({1, 3, 64, 64}), "two 64x64 LR triplets");

  TrainConfig tc = TrainConfig::tiny();
  tc.augment = {false, false};
  TrainSession s = TrainSession::start(ModelConfig::tiny(), tc);
  const auto t0 = Clock::now();
  double first = 0.0, last = 0.0;
  int steps = 0;
  for (; steps < 2000; ++steps) {
    const StepRecord r = train_step(s, data, 1, 0, kOverfitLr);
    if (steps == 0) first = r.loss.total;
    last = r.loss.total;
    if (last < 1e-3) {
      ++steps;
      break;
    }
  }
  const double secs = seconds_since(t0);
  o.require(last < 1e-3, "loss");
  o.require(secs < 600.0, "time");
  o.detail << "W=16 batch=2 lr=" << kOverfitLr << " loss " << first << " -> " << last << " in " << steps
           << " steps, " << secs << " s on " << threads() << " thread(s)";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac5_schedule() {
  Outcome o;
  const TrainConfig c;
  const std::vector<std::tuple<int, int, double>> table{
      {1, 0, 1e-4}, {1, 29, 1e-4}, {1, 30, 1e-5}, {1, 59, 1e-5},
      {2, 0, 5e-5}, {2, 24, 5e-5}, {2, 25, 5e-6}, {2, 49, 5e-6}};
  int exact = 0;
  for (auto [stage, epoch, lr] : table) {
    const double got = lr_at(stage, epoch, c);
    if (got == lr) ++exact;
    o.require(got == lr, "stage " + std::to_string(stage) + " epoch " + std::to_string(epoch));
  }

  set_threads(1);
  const auto data = fixture::tiny_triplets(2);
  TrainSession s = TrainSession::start(fixture::small_model(), fixture::short_schedule());
  const auto before = s.params;
  train_stage1(s, data);
  int gate = 0, moved = 0;
  bool gate_same = true;
  for (const auto& n : s.params.names()) {
    if (n.rfind("gate/", 0) == 0) {
      ++gate;
      gate_same &= bit_equal(s.params.at(n), before.at(n));
    } else if (!bit_equal(s.params.at(n), before.at(n))) {
      ++moved;
    }
  }
  o.require(gate > 0 && gate_same, "gate changed in stage 1");
  o.require(moved > 0, "stage 1 trained nothing");
  o.detail << "lr table " << exact << "/" << table.size() << " exact; stage 1: " << gate
           << " gate tensors bit-unchanged, " << moved << " other tensors updated";
  return o;
}

// ---------------------------------------------------------------------------

double direct_mse(const Tensor<double>& a, const Tensor<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(acc / a.size());
}

Outcome ac6_loss() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::int64_t n = 1 + seed % 3, h = 4 * (1 + seed % 4), w = 4 * (1 + (seed / 4) % 4);
    const auto hr = random_tensor({n, 3, 4 * h, 4 * w}, seed, -1, 2), target = random_tensor({n, 3, 4 * h, 4 * w}, seed + 100);
    const auto lr = random_tensor({n, 3, h, w}, seed + 200, -1, 2), l = random_tensor({n, 3, h, w}, seed + 300);
    Graph<double> g(false);
    const auto loss = compute_loss<double>(g.leaf(hr), g.leaf(target), g.leaf(lr), g.leaf(l), 0.5);
    const double expect = direct_mse(hr, target) + 0.5 * direct_mse(lr, l);
    worst = std::max({worst, std::abs(loss.values.total - expect) / expect,
                      std::abs(loss.total.value()[0] - expect) / expect});
  }
  o.require(worst <= 1e-9, "relative error");
  o.detail << "50 random cases, worst relative error " << worst;
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac7_metrics() {
  Outcome o;
  const auto a = random_tensor({1, 3, 16, 16}, 1, 0.1, 0.9);
  Tensor<double> b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += (i % 2 ? 1 : -1) * std::sqrt(1e-3);
  const double p = psnr(a, b).db;
  o.require(std::abs(p - 30.0) <= 1e-6, "psnr");

  double self = 0.0, worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_tensor({1, 3, 32, 32}, 100 + s, 0, 1);
    self = std::max(self, std::abs(ssim(x, x) - 1.0));
    auto y = x;
    const auto noise = random_tensor({1, 3, 32, 32}, 200 + s, -0.3, 0.3);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i] + noise[i] * (s % 5) / 4.0, 0.0, 1.0);
    worst = std::max(worst, std::abs(ssim(x, y) - oracle::ssim_gray(oracle::gray(x), oracle::gray(y), 32, 32)));
  }
  o.require(self <= 1e-9, "ssim(x,x)");
  o.require(worst <= 1e-6, "ssim oracle");
  o.detail << "psnr=" << p << " dB, max|ssim(x,x)-1|=" << self << ", max ssim deviation over 20 pairs=" << worst;
  return o;
}

// ---------------------------------------------------------------------------

std::int64_t grid_oracle(std::int64_t extent, std::int64_t crop, std::int64_t stride) {
  std::int64_t n = 0;
  for (std::int64_t y = 0; y + crop <= extent; y += stride) ++n;
  return n;
}

std::map<std::string, std::vector<char>> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = fixture::read_bytes(e.path());
  }
  return out;
}

Outcome ac8_dataset() {
  Outcome o;
  std::vector<Image> imgs;
  for (int i = 0; i < 4; ++i) imgs.push_back(synth_scene("img" + std::to_string(i), 160 + 24 * i, 200 - 16 * i, 5));
  TripletOptions to;
  to.scales_per_image = 3;
  to.crop = 64;
  to.stride = 32;
  to.seed = 9;
  const TripletSet set = make_triplets(imgs, to);

  double worst = 0.0;
  std::map<std::pair<std::string, int>, std::pair<std::int64_t, double>> groups;
  for (const auto& t : set.triplets) {
    const auto ref = oracle::bicubic(t.h.cast<double>(), t.h.shape().h / 4, t.h.shape().w / 4);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(t.l[i] - ref[i]));
    auto& g = groups[{t.source, t.scale_index}];
    ++g.first;
    g.second = t.scale;
  }
  o.require(!set.triplets.empty() && worst <= 1e-5, "L != bicubic(H)");

  int grids = 0;
  for (const auto& img : imgs) {
    for (int k = 0; k < to.scales_per_image; ++k) {
      const auto it = groups.find({img.id, k});
      if (it == groups.end()) continue;
      const double sc = it->second.second;
      const std::int64_t h = std::lround(img.pixels.shape().h * sc), w = std::lround(img.pixels.shape().w * sc);
      o.require(it->second.first == grid_oracle(h, to.crop, to.stride) * grid_oracle(w, to.crop, to.stride),
                img.id + " scale " + std::to_string(k));
      ++grids;
    }
  }
  o.require(grids > 0, "no grids checked");

  const auto root = fixture::temp_dir("acc_dataset");
  save_triplets(root / "a", set.triplets);
  save_triplets(root / "b", make_triplets(imgs, to).triplets);
  auto other = to;
  other.seed = 10;
  save_triplets(root / "c", make_triplets(imgs, other).triplets);
  const auto a = dir_bytes(root / "a");
  const bool same = a == dir_bytes(root / "b");
  const bool differs = a != dir_bytes(root / "c");
  fs::remove_all(root);
  o.require(same, "same seed differs");
  o.require(differs, "different seed identical");
  o.detail << set.triplets.size() << " triplets, max|L-bicubic(H)|=" << worst << ", " << grids
           << " crop grids match, same seed byte-identical over " << a.size() << " files";
  return o;
}

// ---------------------------------------------------------------------------

// Fixed desk-scale ablation: synthetic scenes, identical seed and schedule
// for every variant.
constexpr int kAblationImages = 8;
constexpr int kAblationStepsPerStage = 800;

Outcome ac9_ablation() {
  Outcome o;
  const auto t0 = Clock::now();
  std::vector<Image> imgs;
  for (int i = 0; i < kAblationImages; ++i) imgs.push_back(synth_scene("s" + std::to_string(i), 256, 256, 11));
  TripletOptions to;
  to.scales_per_image = 1;
  to.min_scale = to.max_scale = 1.0;
  to.crop = 128;
  to.stride = 64;
  to.seed = 3;
  auto [train_set, val_set] = split_every(make_triplets(imgs, to).triplets, 4);

  AblationConfig ac;
  ac.width = 16;
  ac.train = TrainConfig::tiny();
  ac.train.batch_size = 4;
  ac.train.steps_per_epoch = kAblationStepsPerStage / 4;
  ac.train.stage1 = {4, 1e-3, 0.1, 3};
  ac.train.stage2 = {4, 5e-4, 0.1, 3};
  ac.variants = {Variant::baseline, Variant::model3, Variant::model5, Variant::gfn};
  const EvalReport rep = run_ablation(train_set, val_set, ac, [](const std::string& s) { std::cerr << s << "\n"; });
  o.require(rep.errors.empty() && rep.rows.size() == 4, "ablation run");
  if (!o.pass) return o;

  std::map<std::string, double> db;
  for (const auto& r : rep.rows) db[r.variant] = r.psnr;
  const std::array<const char*, 4> order{"GFN", "Model5", "Model3", "Baseline"};
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const double gap = db[order[i]] - db[order[i + 1]];
    if (gap < 0.0) {
      std::ostringstream w;
      w << order[i] << " below " << order[i + 1] << " by " << -gap << " dB";
      if (gap >= -0.1) {
        o.warnings.push_back(w.str());
      } else {
        o.require(false, w.str());
      }
    }
  }
  const double margin = db["GFN"] - db["Baseline"];
  o.require(margin >= 0.3, "GFN over Baseline");
  const double secs = seconds_since(t0);
  o.require(secs <= 7200.0, "runtime");
  o.detail << "val PSNR GFN=" << db["GFN"] << " Model5=" << db["Model5"] << " Model3=" << db["Model3"]
           << " Baseline=" << db["Baseline"] << " (GFN-Baseline=" << margin << " dB), " << train_set.size()
           << " train / " << val_set.size() << " val crops, " << 2 * kAblationStepsPerStage << " steps each, "
           << secs << " s";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac10_efficiency() {
  Outcome o;
  const Tensor<float> x = random_tensor<float>({1, 3, 32, 32}, 3, 0, 1);
  std::map<Variant, double> secs;
  for (Variant v : {Variant::model2, Variant::gfn}) {
    const ModelConfig cfg = ModelConfig::tiny(v);
    secs[v] = bench_inference(init_params<float>(cfg, 1), cfg, x, 5).median_seconds;
  }
  o.require(secs[Variant::model2] > secs[Variant::gfn], "Model2 not slower");

  int matched = 0;
  for (int w : {8, 16, 64}) {
    for (Variant v : all_variants()) {
      ModelConfig cfg;
      cfg.width = w;
      cfg.variant = v;
      const bool ok = init_params<float>(cfg, 1).count() == oracle::analytic_params(v, w);
      o.require(ok, std::string(variant_name(v)) + " W" + std::to_string(w));
      matched += ok;
    }
  }
  ModelConfig full;
  o.detail << "median s/image at W=16, 32x32: Model2=" << secs[Variant::model2] << " GFN=" << secs[Variant::gfn]
           << "; parameter counts " << matched << "/21 match the layer sums (GFN W=64: "
           << init_params<float>(full, 1).count() << ")";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac11_checkpoint() {
  Outcome o;
  set_threads(1);
  const auto root = fixture::temp_dir("acc_ckpt");
  const ModelConfig cfg = ModelConfig::tiny();
  save_model(root / "a.gfn", init_params<float>(cfg, 3), cfg);
  ModelConfig loaded_cfg;
  const auto loaded = load_model(root / "a.gfn", &loaded_cfg);
  save_model(root / "b.gfn", loaded, loaded_cfg);
  const bool model_same = fixture::read_bytes(root / "a.gfn") == fixture::read_bytes(root / "b.gfn");
  o.require(model_same, "model file");

  const auto data = fixture::tiny_triplets(2);
  const auto model = fixture::small_model();
  const auto tc = fixture::short_schedule();
  TrainSession mid = TrainSession::start(model, tc);
  RunOptions ro;
  ro.checkpoint_dir = root / "s1";
  ro.stop_after_epochs = 1;
  train(mid, data, ro);
  const TrainSession reloaded = load_session(root / "s1", tc);
  save_session(root / "s2", reloaded);
  bool session_same = true;
  for (const char* f : {kModelFile, kAdamFile, kMetaFile}) {
    session_same &= fixture::read_bytes(root / "s1" / f) == fixture::read_bytes(root / "s2" / f);
  }
  o.require(session_same, "session files");

  TrainSession full = TrainSession::start(model, tc);
  std::ostringstream full_log;
  RunOptions fo;
  fo.log = &full_log;
  train(full, data, fo);
  const int epochs = tc.stage1.epochs + tc.stage2.epochs;
  int exact = 0;
  for (int cut = 1; cut < epochs; ++cut) {
    const auto dir = root / ("cut" + std::to_string(cut));
    TrainSession part = TrainSession::start(model, tc);
    std::ostringstream log;
    RunOptions ropt;
    ropt.log = &log;
    ropt.checkpoint_dir = dir;
    ropt.stop_after_epochs = cut;
    train(part, data, ropt);
    TrainSession resumed = load_session(dir, tc);
    ropt.stop_after_epochs = -1;
    train(resumed, data, ropt);
    bool same = resumed.global_step == full.global_step && log.str() == full_log.str();
    for (const auto& n : full.params.names()) same &= bit_equal(resumed.params.at(n), full.params.at(n));
    o.require(same, "resume after epoch " + std::to_string(cut));
    exact += same;
  }
  fs::remove_all(root);
  o.detail << "model save/load/save identical=" << (model_same ? "yes" : "no")
           << ", session identical=" << (session_same ? "yes" : "no") << ", resumed runs bit-exact " << exact << "/"
           << epochs - 1;
  return o;
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)();
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "gradient suite", ac1_gradients},       {2, "fusion identity", ac2_fusion},
      {3, "shape contract", ac3_shapes},          {4, "overfit two samples", ac4_overfit},
      {5, "schedule and frozen gate", ac5_schedule}, {6, "loss weighting", ac6_loss},
      {7, "metric oracles", ac7_metrics},          {8, "dataset invariants", ac8_dataset},
      {9, "ablation ordering", ac9_ablation},      {10, "efficiency and parameter count", ac10_efficiency},
      {11, "checkpoint round trip and resume", ac11_checkpoint},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion number (repeatable)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    for (const auto& w : o.warnings) std::cout << "warning: AC" << c.id << " " << w << "\n";
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << "AC" << c.id << " " << c.title << ": " << o.detail.str();
    for (std::size_t i = 0; i < o.failures.size(); ++i) std::cout << (i ? "; " : " | failed: ") << o.failures[i];
    std::cout << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
