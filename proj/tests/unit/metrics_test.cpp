#include <gtest/gtest.h>

#include <cmath>

#include "dape/error.hpp"
#include "dape/metrics.hpp"
#include "dape/synthetic.hpp"
#include "oracles.hpp"

using namespace dape;
using dape::testing::random_clip;
using dape::testing::uniform_frames_clip;

TEST(Interpolation, MatchesPixelOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto clip = random_clip(3 + trial % 3, 4, 4, 1 + 2 * (trial % 2), rng);
    const auto got = interpolation_metrics(clip);
    const auto [err, psnr] = dape::testing::interpolation_oracle(clip);
    EXPECT_NEAR(got.int_err, err, 1e-9);
    EXPECT_NEAR(got.int_psnr, psnr, 1e-9);
  }
}

TEST(Interpolation, AnalyticCases) {
  const auto constant = uniform_frames_clip({0.3f, 0.3f, 0.3f}, 4, 4);
  EXPECT_EQ(interpolation_metrics(constant).int_err, 0.0);
  EXPECT_EQ(interpolation_metrics(constant).int_psnr, kPsnrCap);
  // Middle prediction 0.5 vs 0.25: MSE 1/16.
  const auto ramp = uniform_frames_clip({0.0f, 0.25f, 1.0f}, 4, 4);
  EXPECT_NEAR(interpolation_metrics(ramp).int_psnr, 10.0 * std::log10(16.0), 1e-9);
  EXPECT_NEAR(interpolation_metrics(ramp).int_err, 0.25, 1e-9);
  EXPECT_THROW(interpolation_metrics(uniform_frames_clip({0.0f, 1.0f}, 2, 2)), ValidationError);
}

TEST(Warping, MatchesPixelOracleWithFractionalFlow) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto edited = random_clip(3, 4, 4, 1 + 2 * (trial % 2), rng);
    std::vector<FlowField> flows;
    for (int k = 0; k < 2; ++k) {
      FlowField f(4, 4);
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) f.set(y, x, d(rng), d(rng));
      flows.push_back(f);
    }
    EXPECT_NEAR(warping_error(flows, edited), dape::testing::warping_oracle(flows, edited), 1e-9);
  }
}

TEST(Warping, AnalyticCases) {
  const auto src = uniform_frames_clip({0.5f, 0.5f, 0.5f}, 4, 4);
  ZeroFlow zero;
  EXPECT_EQ(warping_error(zero, src, src), 0.0);
  const auto offset = uniform_frames_clip({0.5f, 0.6f, 0.7f}, 4, 4);
  EXPECT_NEAR(warping_error(zero, src, offset), 0.01, 1e-6);
  // Flow pointing entirely outside the frame leaves no valid samples; the pair is skipped.
  std::vector<FlowField> flows{FlowField::constant(4, 4, 10.0, 0.0), FlowField::constant(4, 4, 0.0, 0.0)};
  EXPECT_NEAR(warping_error(flows, offset), 0.01, 1e-6);
  EXPECT_THROW(warping_error(std::vector<FlowField>{flows[0]}, offset), ValidationError);
  EXPECT_THROW(warping_error(zero, src, uniform_frames_clip({0.5f, 0.5f}, 4, 4)), ValidationError);
}

TEST(Warping, TranslationCompensated) {
  // Edited content moving 2 px right per frame with matching flow warps exactly
  // wherever the sample is in bounds.
  const auto edited = VideoClip::generate("m", 3, 6, 10, 1, 8.0, [](auto f, auto, auto x, auto) {
    return static_cast<float>(std::clamp<long>(static_cast<long>(x) - 2 * static_cast<long>(f), 0, 9)) / 9.0f;
  });
  std::vector<FlowField> flows(2, FlowField::constant(6, 10, 2.0, 0.0));
  EXPECT_NEAR(warping_error(flows, edited), 0.0, 1e-12);
}

TEST(ClipScores, MatchEmbeddingOracle) {
  std::mt19937_64 rng(3);
  const StubFrameEmbedder embedder(32, 5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto clip = random_clip(4, 16, 16, 3, rng);
    std::vector<std::vector<double>> e;
    for (std::size_t f = 0; f < 4; ++f) e.push_back(embedder.embed_frame(clip, f));
    EXPECT_NEAR(clip_frame(embedder, clip), dape::testing::mean_pair_cosine(e, false), 1e-12);
    EXPECT_NEAR(clip_frame(embedder, clip, FramePairMode::kAllPairs), dape::testing::mean_pair_cosine(e, true), 1e-12);
    const auto t = embedder.embed_text("a red car");
    double expected = 0.0;
    for (const auto& v : e) expected += cosine_similarity(v, t);
    EXPECT_NEAR(clip_text(embedder, clip, "a red car"), expected / 4.0, 1e-12);
  }
}

TEST(ClipScores, StubEmbedderProperties) {
  const StubFrameEmbedder a(64, 1), b(64, 1), c(64, 2);
  const auto clip = synthetic_toy_clip(3, 16);
  EXPECT_EQ(a.embed_frame(clip, 1), b.embed_frame(clip, 1));
  EXPECT_NE(a.embed_frame(clip, 1), c.embed_frame(clip, 1));
  EXPECT_EQ(a.embed_frame(clip, 0).size(), 64u);
  EXPECT_EQ(a.embed_text("Red car"), a.embed_text("red  car"));
  // Identical frames are perfectly consistent.
  EXPECT_NEAR(clip_frame(a, uniform_frames_clip({0.4f, 0.4f, 0.4f}, 8, 8)), 1.0, 1e-12);
  EXPECT_THROW(StubFrameEmbedder(0), ConfigError);
  EXPECT_NEAR(cosine_similarity({1, 0}, {0, 2}), 0.0, 1e-15);
  EXPECT_THROW(cosine_similarity({1, 0}, {1}), ShapeError);
  EXPECT_THROW(cosine_similarity({0, 0}, {1, 1}), NumericError);
}

TEST(Report, JsonRoundTripAndTable) {
  const auto clip = synthetic_toy_clip(4, 16);
  const StubFrameEmbedder embedder;
  const auto report = evaluate(clip, clip.with_id("toy-edited"), "a ball", embedder, ZeroFlow(),
                               EvaluateOptions{FramePairMode::kConsecutive, "abc", "row"});
  EXPECT_EQ(report.edited_id, "toy-edited");
  EXPECT_EQ(report.embedder, "stub");
  EXPECT_EQ(report.flow_backend, "zero");
  EXPECT_EQ(report.warp_err, warping_error(ZeroFlow(), clip, clip));
  const auto j = to_json(report);
  EXPECT_EQ(metric_report_from_json(j), report);
  EXPECT_EQ(j["scale_exponent"]["clip_f"], -2);
  EXPECT_THROW(metric_report_from_json(nlohmann::json{{"label", 3}}), ParseError);

  const auto& cols = metric_columns();
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_STREQ(cols[0].key, "clip_f");
  EXPECT_STREQ(cols[4].key, "clip_t");
  EXPECT_EQ(cols[2].scale_exponent, 0);

  auto other = report;
  other.label = "row2";
  other.clip_f = 0.5;
  const auto mean = aggregate({report, other});
  EXPECT_EQ(mean.label, "mean");
  EXPECT_DOUBLE_EQ(mean.clip_f, (report.clip_f + 0.5) / 2);
  EXPECT_THROW(aggregate({}), ValidationError);

  const std::string table = render_table({report, other}, mean);
  EXPECT_NE(table.find("CLIP-F (x1e-2)"), std::string::npos) << table;
  EXPECT_NE(table.find("50.00"), std::string::npos) << table;
  EXPECT_NE(table.find("mean"), std::string::npos);
  EXPECT_NE(table.find("---"), std::string::npos);
}
