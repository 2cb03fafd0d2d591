#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dape/backbone.hpp"
#include "dape/peft.hpp"

namespace dape {

struct TrainStageConfig {
  TrainingStage stage = TrainingStage::kStage1;
  int steps = 400;
  double learning_rate = 5e-5;
  std::size_t batch_size = 1;
  double delta = 1.0;
  std::uint64_t seed = 0;

  static TrainStageConfig stage1_defaults();
  static TrainStageConfig stage2_defaults();
  /// Joint ablation: stage-1 budget over the union of both parameter sets.
  static TrainStageConfig one_stage_defaults();

  void validate() const;
};

struct TrainReport {
  TrainingStage stage = TrainingStage::kStage1;
  std::vector<double> losses;
  std::vector<int> timesteps;
  /// Seconds since the stage started, one per step.
  std::vector<double> timestamps;
  double wall_clock_seconds = 0.0;
  std::uint64_t checksum = 0;

  /// Mean of the first / last ceil(10%) of the loss series.
  double head_mean(double fraction = 0.1) const;
  double tail_mean(double fraction = 0.1) const;
};

/// Mean elementwise Huber loss.
double huber_loss(const Tensor& residual, double delta);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor noised_latent(const NoiseSchedule& schedule, const Tensor& z0, int t, const Tensor& noise);

using NoisePredictorFn = std::function<Var(const Var& z_t, int t)>;

/// Huber(eps - predictor(z_t, t)) with z_t built from `noise`.
Var diffusion_step_loss(const NoisePredictorFn& predictor, const NoiseSchedule& schedule, const Tensor& z0, int t,
                        const Tensor& noise, double delta);
Var diffusion_step_loss(const UNetModel& model, const LatentVideo& latent, int t, const ConditionEmbedding& cond,
                        const Tensor& noise, double delta);

/// Adam without weight decay.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Var> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step();
  void zero_grad();
  long iterations() const noexcept { return iter_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, b1_, b2_, eps_;
  long iter_ = 0;
};

/// One-shot fine-tuning on a single clip. The clip is encoded with the
/// model's patchify codec and the caption with `encoder`.
TrainReport run_stage(UNetModel& model, const TrainStageConfig& cfg, const VideoClip& clip,
                      const std::string& caption, const TextEncoder& encoder);
/// Same, with the default hash text encoder for the model config.
TrainReport run_stage(UNetModel& model, const TrainStageConfig& cfg, const VideoClip& clip,
                      const std::string& caption);

/// Stage 1 (norm sites) then stage 2 (adapters). If the model has no adapters
/// when stage 1 finishes, `placement` is injected with `peft`.
std::pair<TrainReport, TrainReport> run_dual_stage(UNetModel& model, const TrainStageConfig& cfg1,
                                                   const TrainStageConfig& cfg2, const VideoClip& clip,
                                                   const std::string& caption, const PlacementSpec& placement = {},
                                                   const PeftConfig& peft = {});

/// Default text encoder matching the backbone's cross-attention width.
HashTextEncoder default_text_encoder(const BackboneConfig& config);

/// Line-delimited JSON: one record per step with stage, step, t, loss, timestamp,
/// then a summary record with wall clock and checksum.
void write_train_report(const std::filesystem::path& path, const TrainReport& report);

}  // namespace dape
