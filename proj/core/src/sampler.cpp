#include "dape/sampler.hpp"

#include <cmath>

#include "dape/error.hpp"
#include "dape/trainer.hpp"

namespace dape {

void SamplerConfig::validate(int total_steps) const {
  if (num_steps < 0 || num_steps > total_steps) {
    throw ConfigError("num_steps must lie in [0, " + std::to_string(total_steps) + "], got " +
                      std::to_string(num_steps));
  }
  if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale)) {
    throw ConfigError("guidance_scale must be finite and non-negative");
  }
}

NoisePredictor unet_predictor(const UNetModel& model, const ConditionHook* hook) {
  return [&model, hook](const Tensor& z_t, int t, const Tensor& cond) { return model.predict(z_t, t, cond, hook); };
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double scale) {
  if (eps_uncond.shape() != eps_cond.shape()) {
    throw ShapeError("guidance inputs differ in shape: " + shape_str(eps_uncond.shape()) + " vs " +
                     shape_str(eps_cond.shape()));
  }
  Tensor out(eps_cond.shape());
  auto o = out.data();
  auto u = eps_uncond.data();
  auto c = eps_cond.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - scale) * u[i] + scale * c[i];
  return out;
}

std::vector<int> ddim_timesteps(int num_steps, int total_steps) {
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(std::max(num_steps, 0)));
  for (int k = 1; k <= num_steps; ++k) {
    ts.push_back(static_cast<int>(static_cast<long long>(k) * total_steps / num_steps));
  }
  return ts;
}

Tensor ddim_step(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps, int t_from, int t_to) {
  const double a_from = schedule.alpha_bar(t_from);
  const double a_to = schedule.alpha_bar(t_to);
  const double sa_from = std::sqrt(a_from), sb_from = std::sqrt(1.0 - a_from);
  const double sa_to = std::sqrt(a_to), sb_to = std::sqrt(1.0 - a_to);
  Tensor out(z.shape());
  auto o = out.data();
  auto x = z.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0 = (x[i] - sb_from * e[i]) / sa_from;
    o[i] = sa_to * x0 + sb_to * e[i];
  }
  return out;
}

namespace {

void check_finite(const Tensor& z, const char* what, int step) {
  if (!z.all_finite()) throw NumericError(std::string(what) + ": non-finite latent at step " + std::to_string(step));
}

}  // namespace

LatentVideo ddim_sample(const NoisePredictor& predictor, const NoiseSchedule& schedule, const LatentVideo& z_T,
                        const Tensor& cond, const Tensor& uncond, const SamplerConfig& cfg) {
  cfg.validate(schedule.total_steps());
  check_finite(z_T.latents, "ddim_sample", 0);
  const auto ts = ddim_timesteps(cfg.num_steps, schedule.total_steps());
  Tensor z = z_T.latents;
  for (int k = cfg.num_steps; k >= 1; --k) {
    const int t = ts[static_cast<std::size_t>(k - 1)];
    const int t_prev = k >= 2 ? ts[static_cast<std::size_t>(k - 2)] : 0;
    Tensor eps = predictor(z, t, cond);
    if (cfg.guidance_scale != 1.0) eps = cfg_combine(predictor(z, t, uncond), eps, cfg.guidance_scale);
    z = ddim_step(schedule, z, eps, t, t_prev);
    check_finite(z, "ddim_sample", cfg.num_steps - k + 1);
  }
  return {std::move(z), 0};
}

LatentVideo ddim_invert(const NoisePredictor& predictor, const NoiseSchedule& schedule, const LatentVideo& z_0,
                        const Tensor& cond, const SamplerConfig& cfg) {
  cfg.validate(schedule.total_steps());
  check_finite(z_0.latents, "ddim_invert", 0);
  const auto ts = ddim_timesteps(cfg.num_steps, schedule.total_steps());
  Tensor z = z_0.latents;
  int t_prev = z_0.timestep.value_or(0);
  for (int k = 1; k <= cfg.num_steps; ++k) {
    const int t = ts[static_cast<std::size_t>(k - 1)];
    const Tensor eps = predictor(z, t, cond);
    z = ddim_step(schedule, z, eps, t_prev, t);
    check_finite(z, "ddim_invert", k);
    t_prev = t;
  }
  return {std::move(z), t_prev};
}

LatentVideo ddim_sample(const UNetModel& model, const LatentVideo& z_T, const ConditionEmbedding& cond,
                        const ConditionEmbedding& uncond, const SamplerConfig& cfg, const ConditionHook* hook) {
  return ddim_sample(unet_predictor(model, hook), model.schedule(), z_T, cond.tokens, uncond.tokens, cfg);
}

LatentVideo ddim_invert(const UNetModel& model, const LatentVideo& z_0, const ConditionEmbedding& cond,
                        const SamplerConfig& cfg, const ConditionHook* hook) {
  return ddim_invert(unet_predictor(model, hook), model.schedule(), z_0, cond.tokens, cfg);
}

VideoClip edit_video(const UNetModel& model, const VideoClip& source, const std::string& source_caption,
                     const std::string& edit_prompt, const SamplerConfig& cfg, const TextEncoder& encoder,
                     const ConditionHook* hook) {
  cfg.validate(model.schedule().total_steps());
  const PatchifyCodec codec(model.config().reduction);
  const LatentVideo z0 = codec.encode(source);
  const ConditionEmbedding src = encoder.encode(source_caption);
  const ConditionEmbedding tgt = encoder.encode(edit_prompt);
  const ConditionEmbedding empty = encoder.encode("");
  const LatentVideo z_T = ddim_invert(model, z0, src, cfg, hook);
  const LatentVideo out = ddim_sample(model, z_T, tgt, empty, cfg, hook);
  return codec.decode(out, source.id() + "-edited", source.fps());
}

VideoClip edit_video(const UNetModel& model, const VideoClip& source, const std::string& source_caption,
                     const std::string& edit_prompt, const SamplerConfig& cfg, const ConditionHook* hook) {
  return edit_video(model, source, source_caption, edit_prompt, cfg, default_text_encoder(model.config()), hook);
}

}  // namespace dape
