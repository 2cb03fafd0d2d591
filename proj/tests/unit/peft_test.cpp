#include <gtest/gtest.h>

#include "dape/adapter.hpp"
#include "dape/error.hpp"
#include "dape/norm.hpp"
#include "dape/peft.hpp"
#include "oracles.hpp"

using namespace dape;
using dape::testing::random_tensor;
using dape::testing::tiny_backbone;

namespace {

struct NormCase {
  AdjustableNormState state;
  Tensor z;
  ChannelOrder order;
};

// Random site kind, grouping, gamma0 granularity, layout and geometry.
NormCase random_norm_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1), small(1, 3);
  const bool layer = coin(rng);
  const std::size_t groups = layer ? 1 : std::size_t(small(rng));
  const std::size_t channels = groups * std::size_t(small(rng) + 1);
  const ChannelOrder order = coin(rng) ? ChannelOrder::kChannelsFirst : ChannelOrder::kChannelsLast;
  NormCase c;
  c.order = order;
  c.state = AdjustableNormState::create(layer ? NormKind::kLayer : NormKind::kGroup, channels, groups, 1e-5);
  c.state.make_adjustable(coin(rng));
  c.state.gamma.mutable_value() = random_tensor({channels}, rng, -2, 2);
  c.state.beta.mutable_value() = random_tensor({channels}, rng, -2, 2);
  c.state.gamma0.mutable_value() = random_tensor(c.state.gamma0.shape(), rng, -2, 2);
  const std::size_t n = small(rng), p1 = small(rng), p2 = small(rng) + 1;
  c.z = random_tensor(order == ChannelOrder::kChannelsFirst ? Shape{n, channels, p1, p2} : Shape{n, p1 * p2, channels},
                      rng, -3, 3);
  return c;
}

VisualAdapterState random_adapter(std::size_t channels, std::mt19937_64& rng) {
  auto s = VisualAdapterState::create(channels, VisualAdapterConfig{}, rng);
  for (auto& [name, var] : s.named_parameters()) var.mutable_value() = random_tensor(var.shape(), rng);
  return s;
}

}  // namespace

TEST(AdjustableNorm, MatchesScalarOracleOnRandomCases) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_norm_case(rng);
    const Tensor out = adjustable_norm_forward(c.state, Var(c.z), c.order).value();
    const auto expected = dape::testing::norm_oracle(
        c.z.vec(), c.z.shape(), c.order == ChannelOrder::kChannelsFirst, c.state.kind == NormKind::kLayer,
        c.state.groups, c.state.epsilon, c.state.gamma.value().vec(), c.state.beta.value().vec(),
        c.state.gamma0.value().vec());
    for (std::size_t i = 0; i < out.numel(); ++i) ASSERT_NEAR(out[i], expected[i], 1e-10) << "trial " << trial;
  }
}

TEST(AdjustableNorm, Gamma0EntersLinearly) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_norm_case(rng);
    const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
    c.state.gamma0.mutable_value().fill(0.0);
    const Tensor base = adjustable_norm_forward(c.state, Var(c.z), c.order).value();
    c.state.gamma0.mutable_value().fill(a);
    const Tensor moved = adjustable_norm_forward(c.state, Var(c.z), c.order).value();
    for (std::size_t i = 0; i < base.numel(); ++i) ASSERT_NEAR(moved[i] - base[i], a * c.z[i], 1e-12);
  }
}

TEST(AdjustableNorm, InjectionStateMachine) {
  auto s = AdjustableNormState::create(NormKind::kGroup, 4, 2, 1e-5);
  EXPECT_FALSE(s.adjustable());
  s.make_adjustable(true);
  EXPECT_EQ(s.gamma0.shape(), (Shape{4}));
  EXPECT_EQ(s.gamma0.value(), Tensor::zeros({4}));
  EXPECT_THROW(s.make_adjustable(false), StateError);
  EXPECT_THROW(AdjustableNormState::create(NormKind::kGroup, 6, 4, 1e-5), ConfigError);
  EXPECT_THROW(adjustable_norm_forward(s, Var(Tensor::zeros({1, 3, 2, 2})), ChannelOrder::kChannelsFirst),
               ShapeError);
}

TEST(Adapter, MatchesScalarOracle) {
  std::mt19937_64 rng(200);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = random_adapter(8, rng);
    const Tensor z0 = random_tensor({2, 8, 4, 4}, rng, -2, 2);
    const auto expected = dape::testing::adapter_oracle(s, z0);
    const Tensor pre = adapter_preactivation(s, Var(z0)).value();
    const Tensor out = adapter_forward(s, Var(z0)).value();
    for (std::size_t i = 0; i < pre.numel(); ++i) ASSERT_NEAR(pre[i], expected.preactivation[i], 1e-10);
    for (std::size_t i = 0; i < out.numel(); ++i) ASSERT_NEAR(out[i], expected.output[i], 1e-10);
  }
}

TEST(Adapter, DepthwiseKernelOnlyTouchesItsChannel) {
  std::mt19937_64 rng(201);
  auto s = random_adapter(8, rng);
  const Tensor z0 = random_tensor({2, 8, 4, 4}, rng);
  const Tensor before = adapter_preactivation(s, Var(z0)).value();
  const std::size_t plane = 16, k2 = kDepthwiseKernel * kDepthwiseKernel;
  for (std::size_t j = 0; j < s.bottleneck; ++j) {
    auto& kernel = s.dw_kernel.mutable_value();
    const Tensor saved = kernel;
    for (std::size_t i = 0; i < k2; ++i) kernel[j * k2 + i] += 0.3;
    const Tensor after = adapter_preactivation(s, Var(z0)).value();
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t b = 0; b < s.bottleneck; ++b) {
        double change = 0.0;
        for (std::size_t p = 0; p < plane; ++p) change += std::abs(after[(f * s.bottleneck + b) * plane + p] -
                                                                   before[(f * s.bottleneck + b) * plane + p]);
        if (b == j) EXPECT_GT(change, 0.0);
        else EXPECT_EQ(change, 0.0) << "kernel " << j << " leaked into channel " << b;
      }
    kernel = saved;
  }
}

TEST(Adapter, ZeroUpProjectionIsIdentity) {
  std::mt19937_64 rng(202);
  const auto s = VisualAdapterState::create(8, VisualAdapterConfig{}, rng);
  EXPECT_EQ(s.bottleneck, 2u);
  const Tensor z0 = random_tensor({2, 8, 3, 3}, rng);
  EXPECT_EQ(adapter_forward(s, Var(z0)).value(), z0);
  VisualAdapterConfig bad;
  bad.bottleneck_ratio = 3;
  EXPECT_THROW(VisualAdapterState::create(8, bad, rng), ConfigError);
}

TEST(Adapter, ParameterGradients) {
  std::mt19937_64 rng(203);
  auto s = random_adapter(8, rng);
  const Tensor z0 = random_tensor({2, 8, 3, 3}, rng);
  const Tensor w = random_tensor(z0.shape(), rng);
  auto objective = [&] { return ops::sum(ops::mul(adapter_forward(s, Var(z0)), Var(w))); };
  for (auto& [name, var] : s.named_parameters()) var.set_requires_grad(true);
  backward(objective());
  for (auto& [name, var] : s.named_parameters()) {
    auto& values = var.mutable_value();
    for (std::size_t i = 0; i < values.numel(); i += 3) {
      const double numeric =
          dape::testing::central_difference([&] { return objective().value()[0]; }, values.data()[i], 1e-6);
      EXPECT_LT(dape::testing::relative_error(var.grad()[i], numeric, 1e-6), 1e-5) << name << "[" << i << "]";
    }
  }
}

TEST(Placement, ParseAndPrint) {
  EXPECT_EQ(PlacementSpec::parse("5"), PlacementSpec());
  EXPECT_EQ(PlacementSpec::parse("1-7"), PlacementSpec::all());
  EXPECT_EQ(PlacementSpec::parse("1,2,6,7").indices(), (std::set<int>{1, 2, 6, 7}));
  EXPECT_EQ(PlacementSpec::parse(" 3-5 ").indices(), (std::set<int>{3, 4, 5}));
  EXPECT_TRUE(PlacementSpec::parse("none").empty());
  EXPECT_TRUE(PlacementSpec::parse("").empty());
  EXPECT_EQ(PlacementSpec({1, 2, 3}).to_string(), "1-3");
  EXPECT_EQ(PlacementSpec({1, 2, 6, 7}).to_string(), "1,2,6,7");
  EXPECT_EQ(PlacementSpec::none().to_string(), "none");
  for (const char* bad : {"0", "8", "9", "5-3", "a", "1,,2", "1-"}) {
    EXPECT_THROW(PlacementSpec::parse(bad), ValidationError) << bad;
  }
  const auto sweep = ablation_placements();
  ASSERT_EQ(sweep.size(), 6u);
  for (const auto& p : sweep) EXPECT_EQ(PlacementSpec::parse(p.to_string()), p);
}

TEST(Injection, UntrainedInjectionIsBitIdentical) {
  std::mt19937_64 rng(300);
  auto reference = build_unet(tiny_backbone(30));
  for (const auto& placement : {PlacementSpec(), PlacementSpec::all()}) {
    auto model = build_unet(tiny_backbone(30));
    EXPECT_EQ(inject_norm_tuning(model), 35u);
    EXPECT_EQ(inject_adapters(model, placement), placement.indices().size());
    EXPECT_EQ(current_placement(model), placement);
    for (int trial = 0; trial < 3; ++trial) {
      const Tensor z = Tensor::randn({2, model.latent_channels(), 4, 4}, rng);
      const Tensor c = random_tensor({3, 8}, rng);
      EXPECT_EQ(model.predict(z, 1 + trial * 30, c), reference.predict(z, 1 + trial * 30, c));
    }
  }
}

TEST(Injection, ErrorsOnRepeatedOrMissingInjection) {
  auto model = build_unet(tiny_backbone());
  EXPECT_THROW(freeze_for_stage(model, TrainingStage::kStage1), StateError);
  inject_norm_tuning(model);
  EXPECT_THROW(inject_norm_tuning(model), StateError);
  EXPECT_THROW(freeze_for_stage(model, TrainingStage::kStage2), StateError);
  EXPECT_THROW(freeze_for_stage(model, TrainingStage::kOneStage), StateError);
  inject_adapters(model, PlacementSpec({5, 6}));
  EXPECT_THROW(inject_adapters(model, PlacementSpec({6})), StateError);
  EXPECT_EQ(inject_adapters(model, PlacementSpec({7})), 1u);
  EXPECT_EQ(current_placement(model), PlacementSpec({5, 6, 7}));
}

TEST(Injection, TrainableSetsPerStage) {
  auto model = build_unet(tiny_backbone());
  inject_norm_tuning(model);
  inject_adapters(model, PlacementSpec({1, 5}));
  const auto norms = parameters_with_role(model, ParamRole::kNormSite);
  const auto adapters = parameters_with_role(model, ParamRole::kAdapter);
  const auto backbone = parameters_with_role(model, ParamRole::kBackbone);
  EXPECT_EQ(norms.size(), 35u * 3);  // gamma, beta, gamma0 per site
  EXPECT_EQ(adapters.size(), 2u * 8);
  EXPECT_EQ(trainable_parameters(model, TrainingStage::kStage1).size(), norms.size());
  EXPECT_EQ(trainable_parameters(model, TrainingStage::kStage2).size(), adapters.size());
  EXPECT_EQ(trainable_parameters(model, TrainingStage::kOneStage).size(), norms.size() + adapters.size());

  freeze_for_stage(model, TrainingStage::kStage2);
  for (const auto& p : adapters) EXPECT_TRUE(p.var.requires_grad()) << p.name;
  for (const auto& p : norms) EXPECT_FALSE(p.var.requires_grad()) << p.name;
  for (const auto& p : backbone) EXPECT_FALSE(p.var.requires_grad()) << p.name;
  freeze_for_stage(model, TrainingStage::kStage1);
  for (const auto& p : adapters) EXPECT_FALSE(p.var.requires_grad()) << p.name;
  for (const auto& p : norms) EXPECT_TRUE(p.var.requires_grad()) << p.name;
}

TEST(Injection, NormTuningIsASmallFractionOfTheDefaultModel) {
  auto model = build_unet(BackboneConfig{});
  inject_norm_tuning(model);
  std::size_t norm_params = 0;
  for (const auto& p : trainable_parameters(model, TrainingStage::kStage1)) norm_params += p.var.numel();
  const double fraction = static_cast<double>(norm_params) / static_cast<double>(model.parameter_count());
  EXPECT_GT(fraction, 0.0);
  EXPECT_LT(fraction, 0.01);
}

TEST(Injection, ChecksumTracksValues) {
  auto model = build_unet(tiny_backbone());
  inject_norm_tuning(model);
  auto params = parameters_with_role(model, ParamRole::kNormSite);
  const auto before = parameter_checksum(params);
  params[2].var.mutable_value()[0] = 1e-9;
  EXPECT_NE(before, parameter_checksum(params));
}
