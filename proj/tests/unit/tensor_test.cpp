#include <gtest/gtest.h>

#include <cmath>

#include "dape/error.hpp"
#include "dape/hashing.hpp"
#include "dape/schedule.hpp"
#include "dape/tensor.hpp"
#include "dape/text_encoder.hpp"
#include "dape/video.hpp"
#include "oracles.hpp"

using namespace dape;

TEST(Tensor, ShapesAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  t.at({1, 2, 3}) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  EXPECT_THROW(t.at({2, 0, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({4, 6}).vec(), t.vec());
  EXPECT_EQ(shape_str({2, 3}), "[2, 3]");
}

TEST(Tensor, ArithmeticAndFiniteness) {
  Tensor a({3}, 2.0), b({3}, 0.5);
  EXPECT_EQ((a - b)[1], 1.5);
  EXPECT_EQ((2.0 * a)[0], 4.0);
  EXPECT_DOUBLE_EQ(mean_squared(a), 4.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 1.5);
  EXPECT_TRUE(a.all_finite());
  a[0] = std::nan("");
  EXPECT_FALSE(a.all_finite());
  EXPECT_THROW(a += Tensor({2}), ShapeError);
}

TEST(Hashing, StableAndSensitive) {
  // FNV-1a reference values.
  EXPECT_EQ(fnv1a(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  Tensor t({2}, 1.0);
  const auto h = hash_tensor(t);
  t[1] = std::nextafter(1.0, 2.0);
  EXPECT_NE(h, hash_tensor(t));
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Schedule, ScaledLinearIsDecreasingFromOne) {
  const auto s = NoiseSchedule::scaled_linear(1000);
  EXPECT_EQ(s.total_steps(), 1000);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= 1000; ++t) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  // First beta is beta_start exactly.
  EXPECT_NEAR(s.alpha_bar(1), 1.0 - 0.00085, 1e-15);
  EXPECT_THROW(s.alpha_bar(1001), ValidationError);
  EXPECT_THROW(NoiseSchedule::from_alphas_cumprod({1.0, 0.5, 0.7}), ConfigError);
}

TEST(Codec, PatchifyRoundTripIsLossless) {
  std::mt19937_64 rng(1);
  // Values on the 8-bit grid survive the affine map exactly.
  const auto clip = VideoClip::generate("c", 3, 8, 16, 3, 8.0, [&](auto f, auto y, auto x, auto c) {
    return static_cast<float>((f * 31 + y * 7 + x * 3 + c) % 256) / 255.0f;
  });
  const PatchifyCodec codec(4);
  const auto latent = codec.encode(clip);
  EXPECT_EQ(latent.latents.shape(), (Shape{3, 48, 2, 4}));
  const auto back = codec.decode(latent, "c", 8.0);
  ASSERT_TRUE(back.same_geometry(clip));
  for (std::size_t i = 0; i < clip.pixels().size(); ++i) ASSERT_NEAR(back.pixels()[i], clip.pixels()[i], 1e-7);
}

TEST(Codec, LatentChannelLayout) {
  std::mt19937_64 rng(2);
  const auto clip = dape::testing::random_clip(2, 4, 4, 2, rng);
  const PatchifyCodec codec(2);
  const auto z = codec.encode(clip).latents;
  // channel (c*d + dy)*d + dx at (y, x) holds pixel (2y+dy, 2x+dx, c), mapped to 2p - 1.
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t dx = 0; dx < 2; ++dx)
        for (std::size_t y = 0; y < 2; ++y)
          for (std::size_t x = 0; x < 2; ++x)
            EXPECT_DOUBLE_EQ(z.at({0, (c * 2 + dy) * 2 + dx, y, x}),
                             2.0 * clip.at(0, 2 * y + dy, 2 * x + dx, c) - 1.0);
}

TEST(Codec, RejectsIndivisibleFrames) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(PatchifyCodec(4).encode(dape::testing::random_clip(2, 6, 8, 1, rng)), ShapeError);
}

TEST(Codec, DecodeClampsOutOfRange) {
  LatentVideo z{Tensor({2, 1, 1, 1}, 5.0), std::nullopt};
  EXPECT_EQ(PatchifyCodec(1).decode(z, "x", 1.0).at(0, 0, 0, 0), 1.0f);
}

TEST(TextEncoder, DeterministicWithLeadingToken) {
  HashTextEncoder enc(8, 4);
  EXPECT_EQ(enc.encode("").length(), 1u);
  EXPECT_EQ(enc.encode("A red car").tokens, enc.encode("a  red, CAR").tokens);
  EXPECT_EQ(enc.encode("one two three four five six").length(), 4u);
  EXPECT_NE(enc.encode("red").tokens, enc.encode("blue").tokens);
  EXPECT_EQ(tokenize_words("Hello, World-2!"), (std::vector<std::string>{"hello", "world", "2"}));
}
