#include <gtest/gtest.h>

#include <set>

#include "dape/backbone.hpp"
#include "dape/error.hpp"
#include "dape/text_encoder.hpp"
#include "oracles.hpp"

using namespace dape;
using dape::testing::random_tensor;
using dape::testing::tiny_backbone;

namespace {

struct Inputs {
  Tensor z;
  Tensor cond;
};

Inputs random_inputs(const UNetModel& m, std::size_t frames, std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {Tensor::randn({frames, m.latent_channels(), side, side}, rng),
          random_tensor({3, m.config().text_dim}, rng)};
}

}  // namespace

TEST(Backbone, DefaultModelSizeIsRecorded) {
  const auto model = build_unet(BackboneConfig{});
  // Frozen when the default architecture was settled; any change here is an architecture change.
  EXPECT_EQ(model.parameter_count(), 941440u);
  EXPECT_EQ(model.norm_site_count(), 35u);
  EXPECT_EQ(model.latent_channels(), 192u);
}

TEST(Backbone, SevenOrderedAttentionBlocks) {
  const auto model = build_unet(tiny_backbone());
  const auto handles = list_attention_blocks(model);
  ASSERT_EQ(handles.size(), 7u);
  const BlockStage stages[] = {BlockStage::kEncoder, BlockStage::kEncoder, BlockStage::kEncoder, BlockStage::kMiddle,
                               BlockStage::kDecoder, BlockStage::kDecoder, BlockStage::kDecoder};
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(handles[i].index, i + 1);
    EXPECT_EQ(handles[i].stage, stages[i]);
  }
  EXPECT_EQ(handles[4].stage_position, 0) << "block 5 is the first decoder block";
  EXPECT_EQ(handles[3].stage_position, 0);
  EXPECT_EQ(handles[6].stage_position, 2);
}

TEST(Backbone, OutputShapeMatchesInputAndIsDeterministic) {
  const auto a = build_unet(tiny_backbone(11));
  const auto b = build_unet(tiny_backbone(11));
  const auto c = build_unet(tiny_backbone(12));
  const auto in = random_inputs(a, 3, 4, 1);
  const Tensor ya = a.predict(in.z, 17, in.cond);
  EXPECT_EQ(ya.shape(), in.z.shape());
  EXPECT_TRUE(ya.all_finite());
  EXPECT_EQ(ya, b.predict(in.z, 17, in.cond));
  EXPECT_NE(ya, c.predict(in.z, 17, in.cond));
  EXPECT_NE(ya, a.predict(in.z, 18, in.cond));
}

TEST(Backbone, TemporalAttentionMixesFrames) {
  const auto m = build_unet(tiny_backbone(2));
  auto in = random_inputs(m, 3, 4, 2);
  const Tensor before = m.predict(in.z, 5, in.cond);
  const std::size_t frame = in.z.numel() / 3;
  for (std::size_t i = 2 * frame; i < 3 * frame; ++i) in.z[i] += 0.5;  // perturb only the last frame
  const Tensor after = m.predict(in.z, 5, in.cond);
  double first_frame_change = 0.0;
  for (std::size_t i = 0; i < frame; ++i) first_frame_change += std::abs(after[i] - before[i]);
  EXPECT_GT(first_frame_change, 0.0);
}

TEST(Backbone, ClonesAreIndependent) {
  auto m = build_unet(tiny_backbone(3));
  auto copy = m.clone();
  const auto in = random_inputs(m, 2, 4, 3);
  EXPECT_EQ(m.predict(in.z, 3, in.cond), copy.predict(in.z, 3, in.cond));
  copy.parameters().front().var.mutable_value()[0] += 1.0;
  EXPECT_NE(m.predict(in.z, 3, in.cond), copy.predict(in.z, 3, in.cond));
}

TEST(Backbone, HookOnlyReachesDecoderBlocks) {
  const auto m = build_unet(tiny_backbone(4));
  const auto in = random_inputs(m, 2, 4, 4);
  std::set<int> seen;
  ConditionHook zero = [&](int block, const Tensor& f) {
    seen.insert(block);
    return Tensor::zeros(f.shape());
  };
  EXPECT_EQ(m.predict(in.z, 9, in.cond, &zero), m.predict(in.z, 9, in.cond));
  EXPECT_EQ(seen, (std::set<int>{5, 6, 7}));
  ConditionHook bump = [](int, const Tensor& f) { return Tensor(f.shape(), 0.1); };
  EXPECT_NE(m.predict(in.z, 9, in.cond, &bump), m.predict(in.z, 9, in.cond));
  ConditionHook bad = [](int, const Tensor&) { return Tensor({1}); };
  EXPECT_THROW(m.predict(in.z, 9, in.cond, &bad), ShapeError);
}

TEST(Backbone, InputGradientMatchesFiniteDifferences) {
  const auto m = build_unet(tiny_backbone(5));
  auto in = random_inputs(m, 2, 2, 5);
  std::mt19937_64 rng(6);
  const Tensor w = random_tensor(in.z.shape(), rng);
  auto objective = [&](const Tensor& z) {
    double acc = 0.0;
    const Tensor y = m.predict(z, 40, in.cond);
    for (std::size_t i = 0; i < y.numel(); ++i) acc += w[i] * y[i];
    return acc;
  };
  Var z(in.z, true);
  backward(ops::sum(ops::mul(m.forward(z, 40, Var(in.cond)), Var(w))));
  for (std::size_t i = 0; i < in.z.numel(); i += 7) {
    const double numeric =
        dape::testing::central_difference([&] { return objective(in.z); }, in.z.data()[i], 1e-5);
    EXPECT_LT(dape::testing::relative_error(z.grad()[i], numeric, 1e-6), 1e-4) << "element " << i;
  }
}

TEST(Backbone, RejectsBadInputs) {
  const auto m = build_unet(tiny_backbone());
  const auto in = random_inputs(m, 2, 4, 7);
  EXPECT_THROW(m.predict(Tensor::zeros({2, 5, 4, 4}), 3, in.cond), ShapeError);
  EXPECT_THROW(m.predict(in.z, 3, Tensor::zeros({3, 5})), ShapeError);
  EXPECT_THROW(m.predict(in.z, 101, in.cond), ValidationError);
  Tensor nan = in.z;
  nan[0] = std::nan("");
  EXPECT_THROW(m.predict(nan, 3, in.cond), NumericError);
}

TEST(Backbone, ConfigValidation) {
  auto c = tiny_backbone();
  c.norm_groups = 5;
  EXPECT_THROW(build_unet(c), ConfigError);
  c = tiny_backbone();
  c.reduction = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_backbone();
  c.latent_channels = 13;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NE(tiny_backbone(1).hash(), tiny_backbone(2).hash());
  EXPECT_EQ(tiny_backbone(1).canonical(), tiny_backbone(1).canonical());
}

TEST(Backbone, SinusoidLayout) {
  const Tensor e = timestep_sinusoid(3, 8);
  ASSERT_EQ(e.numel(), 8u);
  for (std::size_t i = 0; i < 4; ++i) {
    const double f = std::pow(10000.0, -static_cast<double>(i) / 4.0);
    EXPECT_NEAR(e[i], std::cos(3 * f), 1e-12);
    EXPECT_NEAR(e[4 + i], std::sin(3 * f), 1e-12);
  }
}
