#include <benchmark/benchmark.h>

#include "dape/flow.hpp"
#include "dape/metrics.hpp"
#include "dape/peft.hpp"
#include "dape/synthetic.hpp"
#include "dape/trainer.hpp"

using namespace dape;

namespace {

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  const Var x(Tensor::randn({4, c, 8, 8}, rng)), w(Tensor::randn({c, c, 3, 3}, rng)), b(Tensor::zeros({c}));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1).value().raw());
  state.SetItemsProcessed(state.iterations() * 4 * 64 * c * c * 9);
}
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64);

void BM_UNetForward(benchmark::State& state) {
  auto model = build_unet(BackboneConfig{});
  inject_norm_tuning(model);
  inject_adapters(model, PlacementSpec());
  std::mt19937_64 rng(0);
  const auto frames = static_cast<std::size_t>(state.range(0));
  const Tensor z = Tensor::randn({frames, model.latent_channels(), 2, 2}, rng);
  const Tensor cond = default_text_encoder(model.config()).encode("a ball").tokens;
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(z, 500, cond).raw());
}
BENCHMARK(BM_UNetForward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto model = build_unet(BackboneConfig{});
  inject_norm_tuning(model);
  const auto clip = synthetic_toy_clip(4, 16);
  auto cfg = TrainStageConfig::stage1_defaults();
  cfg.steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_stage(model, cfg, clip, "a ball").losses.data());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_BlockMatching(benchmark::State& state) {
  const auto clip = translating_texture("t", 2, 512, 512, 8.0);
  const BlockMatchingFlow flow;
  for (auto _ : state)
    benchmark::DoNotOptimize(flow.estimate(FrameView::of(clip, 0), FrameView::of(clip, 1)).data().data());
}
BENCHMARK(BM_BlockMatching)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
  const auto clip = synthetic_toy_clip(16, 64);
  const StubFrameEmbedder embedder;
  const ZeroFlow flow;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(clip, clip, "a ball", embedder, flow).clip_f);
}
BENCHMARK(BM_Metrics)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
