#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dape/backbone.hpp"
#include "dape/video.hpp"

namespace dape {

struct SamplerConfig {
  int num_steps = 50;
  double guidance_scale = 7.5;

  /// num_steps in [0, T] (0 is the identity), guidance_scale >= 0 and finite.
  void validate(int total_steps) const;
};

/// eps(z_t, t, cond). Must not depend on call order.
using NoisePredictor = std::function<Tensor(const Tensor& z_t, int t, const Tensor& cond)>;

NoisePredictor unet_predictor(const UNetModel& model, const ConditionHook* hook = nullptr);

/// (1 - s) * eps_uncond + s * eps_cond, which collapses exactly at s = 0 and s = 1.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double scale);

/// Ascending grid t_k = floor(k T / n) for k = 1..n; sampling ends at t = 0.
std::vector<int> ddim_timesteps(int num_steps, int total_steps);

/// One deterministic DDIM move of z from t_from to t_to using eps.
Tensor ddim_step(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps, int t_from, int t_to);

/// Denoise from t = T down to 0. `uncond` is only evaluated when the
/// guidance scale differs from 1.
LatentVideo ddim_sample(const NoisePredictor& predictor, const NoiseSchedule& schedule, const LatentVideo& z_T,
                        const Tensor& cond, const Tensor& uncond, const SamplerConfig& cfg);

/// Ascending reverse of ddim_sample with guidance 1. Each move t_{k-1} -> t_k
/// evaluates eps at the current latent and the target step t_k.
LatentVideo ddim_invert(const NoisePredictor& predictor, const NoiseSchedule& schedule, const LatentVideo& z_0,
                        const Tensor& cond, const SamplerConfig& cfg);

LatentVideo ddim_sample(const UNetModel& model, const LatentVideo& z_T, const ConditionEmbedding& cond,
                        const ConditionEmbedding& uncond, const SamplerConfig& cfg,
                        const ConditionHook* hook = nullptr);
LatentVideo ddim_invert(const UNetModel& model, const LatentVideo& z_0, const ConditionEmbedding& cond,
                        const SamplerConfig& cfg, const ConditionHook* hook = nullptr);

/// encode -> invert under the source caption -> sample under the edit prompt
/// with guidance (unconditional = empty prompt) -> decode.
VideoClip edit_video(const UNetModel& model, const VideoClip& source, const std::string& source_caption,
                     const std::string& edit_prompt, const SamplerConfig& cfg, const TextEncoder& encoder,
                     const ConditionHook* hook = nullptr);
VideoClip edit_video(const UNetModel& model, const VideoClip& source, const std::string& source_caption,
                     const std::string& edit_prompt, const SamplerConfig& cfg, const ConditionHook* hook = nullptr);

}  // namespace dape
