#include <gtest/gtest.h>

#include <set>

#include "gfn/model.hpp"
#include "gfn/ops.hpp"
#include "oracles.hpp"

namespace gfn {
void PrintTo(Variant v, std::ostream* os) { *os << variant_name(v); }
}  // namespace gfn

using namespace gfn;
using oracle::random_tensor;
using oracle::analytic_params;
using oracle::conv;
using oracle::random_params;
using oracle::resblock;

TEST(Params, SingleLayerCountsAtWidth64) {
  EXPECT_EQ(conv(64, 64, 3), 36928);
  EXPECT_EQ(resblock(64), 73856);
}

class EveryVariant : public ::testing::TestWithParam<Variant> {};

TEST_P(EveryVariant, ParameterCountMatchesLayerSum) {
  for (int w : {8, 16, 64}) {
    ModelConfig cfg;
    cfg.width = w;
    cfg.variant = GetParam();
    EXPECT_EQ(init_params<float>(cfg, 1).count(), analytic_params(cfg.variant, w)) << variant_name(cfg.variant);
  }
}

TEST_P(EveryVariant, OutputsAreFourTimesInput) {
  const ModelConfig cfg = ModelConfig::tiny(GetParam());
  const auto params = init_params<float>(cfg, 3);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{12, 20}}) {
    const auto p = predict(params, cfg, random_tensor<float>({1, 3, h, w}, 4, 0, 1));
    EXPECT_EQ(p.hr.shape(), (Shape{1, 3, 4 * h, 4 * w}));
    if (traits(cfg.variant).deblur_loss) {
      ASSERT_TRUE(p.lr.has_value());
      EXPECT_EQ(p.lr->shape(), (Shape{1, 3, h, w}));
    }
    EXPECT_TRUE(p.hr.all_finite());
  }
}

TEST_P(EveryVariant, InitIsSeedDeterministic) {
  const ModelConfig cfg = ModelConfig::tiny(GetParam());
  EXPECT_TRUE(init_params<float>(cfg, 5) == init_params<float>(cfg, 5));
  EXPECT_FALSE(init_params<float>(cfg, 5) == init_params<float>(cfg, 6));
}

TEST(Init, WeightScaleFollowsFanIn) {
  ModelConfig cfg;
  const auto params = init_params<double>(cfg, 9);
  for (const auto& spec : param_specs(cfg)) {
    const auto& t = params.at(spec.name);
    if (spec.is_bias) {
      for (double v : t.vec()) ASSERT_EQ(v, 0.0) << spec.name;
      continue;
    }
    if (t.size() < 20000) continue;
    double s = 0.0, s2 = 0.0;
    for (double v : t.vec()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(t.size()), expect = 1.0 / std::sqrt(3.0 * spec.fan_in);
    EXPECT_NEAR(s / n, 0.0, 5 * expect / std::sqrt(n)) << spec.name;
    EXPECT_NEAR(std::sqrt(s2 / n), expect, 0.03 * expect) << spec.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, EveryVariant,
                         ::testing::Values(Variant::baseline, Variant::model1, Variant::model2, Variant::model3,
                                           Variant::model4, Variant::model5, Variant::gfn),
                         [](const auto& info) { return std::string(variant_name(info.param)); });

TEST(Params, SharedNamesStartIdenticalAcrossVariants) {
  const auto a = init_params<float>(ModelConfig::tiny(Variant::gfn), 9);
  const auto b = init_params<float>(ModelConfig::tiny(Variant::model5), 9);
  for (const auto& n : b.names()) {
    ASSERT_TRUE(a.contains(n)) << n;
    EXPECT_EQ(a.at(n), b.at(n)) << n;
  }
}

TEST(Params, GroupsPartitionTheModel) {
  const auto p = init_params<float>(ModelConfig::tiny(), 1);
  std::int64_t sum = 0;
  for (auto g : {ParamGroup::deblur, ParamGroup::srf, ParamGroup::gate, ParamGroup::recon}) sum += p.count(g);
  EXPECT_EQ(sum, p.count());
  EXPECT_EQ(p.count(ParamGroup::gate), conv(35, 16, 3) + conv(16, 16, 1));
  for (const auto& n : p.names()) {
    EXPECT_EQ(n.rfind(std::string(group_name(p.group(n))) + "/", 0), 0u) << n;
  }
}

TEST(Variants, NamesRoundTrip) {
  for (Variant v : all_variants()) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_EQ(parse_variant("gfn"), Variant::gfn);
  EXPECT_THROW(parse_variant("model9"), std::invalid_argument);
}

TEST(Config, WidthValidation) {
  ModelConfig cfg;
  cfg.width = 6;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.width = 0;
  EXPECT_THROW(param_specs(cfg), std::invalid_argument);
}

TEST(ResBlock, ZeroSecondConvIsIdentity) {
  Graph<double> g(false);
  ParamSet<double> p;
  p.add("rb/conv1/weight", ParamGroup::srf, random_tensor({4, 4, 3, 3}, 1));
  p.add("rb/conv1/bias", ParamGroup::srf, random_tensor({1, 4, 1, 1}, 2));
  p.add("rb/conv2/weight", ParamGroup::srf, Tensor<double>({4, 4, 3, 3}));
  p.add("rb/conv2/bias", ParamGroup::srf, Tensor<double>({1, 4, 1, 1}));
  Binder<double> b(g, p);
  const auto x = g.leaf(random_tensor({2, 4, 6, 6}, 3));
  EXPECT_EQ(resblock_forward(b, "rb", x, 0.1).value(), x.value());
}

TEST(ResBlock, MatchesHandComposition) {
  // x + s * conv2(lrelu(conv1(x)))
  ParamSet<double> p;
  p.add("rb/conv1/weight", ParamGroup::srf, random_tensor({3, 3, 3, 3}, 1));
  p.add("rb/conv1/bias", ParamGroup::srf, random_tensor({1, 3, 1, 1}, 2));
  p.add("rb/conv2/weight", ParamGroup::srf, random_tensor({3, 3, 3, 3}, 3));
  p.add("rb/conv2/bias", ParamGroup::srf, random_tensor({1, 3, 1, 1}, 4));
  const auto x = random_tensor({1, 3, 5, 5}, 5);
  auto h = oracle::conv2d(x, p.at("rb/conv1/weight"), &p.at("rb/conv1/bias"), 1, 1);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = h[i] > 0 ? h[i] : 0.2 * h[i];
  const auto y = oracle::conv2d(h, p.at("rb/conv2/weight"), &p.at("rb/conv2/bias"), 1, 1);
  Graph<double> g(false);
  Binder<double> b(g, p);
  const auto got = resblock_forward(b, "rb", g.leaf(x), 0.25).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(got[i], x[i] + 0.25 * y[i], 1e-12);
}

TEST(Fusion, FusedMinusSrfEqualsMaskTimesDeblur) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = random_params(cfg, 11);
  Graph<double> g(false);
  Binder<double> b(g, params);
  const auto x = g.leaf(random_tensor({2, 3, 8, 12}, 12, 0, 1));
  const auto out = gfn_forward(b, x, cfg);
  ASSERT_TRUE(out.mask && out.phi_srf && out.phi_deblur && out.phi_fusion);
  const auto& m = out.mask->value();
  EXPECT_EQ(m.shape(), out.phi_srf->shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    ASSERT_GT(m[i], 0.0);
    ASSERT_LT(m[i], 1.0);
    const double lhs = out.phi_fusion->value()[i] - out.phi_srf->value()[i];
    ASSERT_NEAR(lhs, m[i] * out.phi_deblur->value()[i], 1e-12);
  }
}

TEST(Fusion, ForcedMaskLimits) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = random_params(cfg, 21);
  for (double mv : {0.0, 1.0}) {
    Graph<double> g(false);
    Binder<double> b(g, params);
    const auto x = g.leaf(random_tensor({1, 3, 8, 8}, 22, 0, 1));
    ForwardOptions o;
    o.fusion = FusionMode::forced_mask;
    o.forced_mask = mv;
    const auto out = gfn_forward(b, x, cfg, o);
    const auto& f = out.phi_fusion->value();
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double expect = out.phi_srf->value()[i] + (mv == 1.0 ? out.phi_deblur->value()[i] : 0.0);
      ASSERT_EQ(f[i], expect);
    }
  }
}

TEST(Fusion, DirectSumHasNoMaskAndSkipsGate) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = random_params(cfg, 31);
  Graph<double> g(false);
  Binder<double> b(g, params);
  ForwardOptions o;
  o.fusion = FusionMode::direct_sum;
  const auto out = gfn_forward(b, g.leaf(random_tensor({1, 3, 8, 8}, 32, 0, 1)), cfg, o);
  EXPECT_FALSE(out.mask.has_value());
  for (const auto& [name, _] : b.bound()) EXPECT_NE(name.rfind("gate/", 0), 0u) << name;
}

TEST(Fusion, LinearGateIsUnbounded) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.gate_activation = GateActivation::linear;
  auto params = random_params(cfg, 41, 1.0);
  Graph<double> g(false);
  Binder<double> b(g, params);
  const auto out = gfn_forward(b, g.leaf(random_tensor({1, 3, 8, 8}, 42, 0, 1)), cfg);
  bool outside = false;
  for (double v : out.mask->value().vec()) outside |= (v <= 0.0 || v >= 1.0);
  EXPECT_TRUE(outside);
}

TEST(Fusion, GateRejectsMismatchedShapes) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = random_params(cfg, 51);
  Graph<double> g(false);
  Binder<double> b(g, params);
  const auto a = g.leaf(random_tensor({1, 16, 8, 8}, 1));
  const auto d = g.leaf(random_tensor({1, 16, 8, 4}, 2));
  const auto img = g.leaf(random_tensor({1, 3, 8, 8}, 3));
  EXPECT_THROW(gate_fuse(b, a, d, img, cfg, {}), ShapeError);
  EXPECT_THROW(gate_fuse(b, a, a, g.leaf(random_tensor({1, 3, 4, 8}, 4)), cfg, {}), ShapeError);
}

TEST(Shapes, InputNotDivisibleByFourIsRejected) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = init_params<float>(cfg, 1);
  EXPECT_THROW(predict(params, cfg, Tensor<float>({1, 3, 10, 12})), ShapeError);
  EXPECT_THROW(predict(params, cfg, Tensor<float>({1, 3, 12, 14})), ShapeError);
  EXPECT_THROW(predict(params, cfg, Tensor<float>({1, 1, 12, 12})), ShapeError);
}

TEST(Shapes, DeblurModuleKeepsResolution) {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto params = random_params(cfg, 61);
  Graph<double> g(false);
  Binder<double> b(g, params);
  const auto out = deblur_forward(b, g.leaf(random_tensor({1, 3, 12, 8}, 1)), cfg, true);
  EXPECT_EQ(out.features.shape(), (Shape{1, 16, 12, 8}));
  EXPECT_EQ(out.image->shape(), (Shape{1, 3, 12, 8}));
}

TEST(Gradients, WholeGfnForwardMatchesFiniteDifferences) {
  ModelConfig cfg;
  cfg.width = 4;
  const auto params = random_params(cfg, 71, 0.3);
  const auto x = random_tensor({1, 3, 4, 4}, 72, 0, 1);
  const std::vector<std::string> probe{"deblur/head/bias",     "deblur/enc/s1/rb2/conv1/bias", "deblur/dec/up0/bias",
                                       "deblur/tail/conv1/bias", "srf/rb7/conv2/weight",       "gate/conv1/weight",
                                       "gate/conv0/bias",      "recon/up1/bias",               "recon/tail/conv1/bias"};
  const auto r = oracle::model_grad_check(params, cfg, x, probe);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.elements, 48u);
}
