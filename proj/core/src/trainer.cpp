#include "dape/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape {

TrainStageConfig TrainStageConfig::stage1_defaults() { return {}; }

TrainStageConfig TrainStageConfig::stage2_defaults() {
  TrainStageConfig c;
  c.stage = TrainingStage::kStage2;
  c.steps = 70;
  c.learning_rate = 1e-5;
  return c;
}

TrainStageConfig TrainStageConfig::one_stage_defaults() {
  TrainStageConfig c;
  c.stage = TrainingStage::kOneStage;
  return c;
}

void TrainStageConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("Huber delta must be positive");
}

namespace {

double window_mean(const std::vector<double>& xs, double fraction, bool tail) {
  if (xs.empty()) return 0.0;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * xs.size())));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += tail ? xs[xs.size() - 1 - i] : xs[i];
  return s / static_cast<double>(n);
}

}  // namespace

double TrainReport::head_mean(double fraction) const { return window_mean(losses, fraction, false); }
double TrainReport::tail_mean(double fraction) const { return window_mean(losses, fraction, true); }

double huber_loss(const Tensor& residual, double delta) {
  if (!(delta > 0.0)) throw ValidationError("Huber delta must be positive");
  if (residual.numel() == 0) return 0.0;
  double s = 0.0;
  for (double r : residual.data()) s += huber(r, delta);
  return s / static_cast<double>(residual.numel());
}

Tensor noised_latent(const NoiseSchedule& schedule, const Tensor& z0, int t, const Tensor& noise) {
  if (z0.shape() != noise.shape()) {
    throw ShapeError("noise shape " + shape_str(noise.shape()) + " differs from latent " + shape_str(z0.shape()));
  }
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(z0.shape());
  auto o = out.data();
  auto x = z0.data();
  auto e = noise.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * e[i];
  return out;
}

Var diffusion_step_loss(const NoisePredictorFn& predictor, const NoiseSchedule& schedule, const Tensor& z0, int t,
                        const Tensor& noise, double delta) {
  Var z_t(noised_latent(schedule, z0, t, noise));
  Var eps_hat = predictor(z_t, t);
  if (eps_hat.shape() != noise.shape()) throw ShapeError("predictor output shape differs from noise");
  return ops::huber_mean(ops::sub(Var(noise), eps_hat), delta);
}

Var diffusion_step_loss(const UNetModel& model, const LatentVideo& latent, int t, const ConditionEmbedding& cond,
                        const Tensor& noise, double delta) {
  if (t < 1 || t > model.schedule().total_steps()) {
    throw ValidationError("training timestep " + std::to_string(t) + " outside [1, T]");
  }
  Var c(cond.tokens);
  auto predictor = [&](const Var& z_t, int step) { return model.forward(z_t, step, c); };
  return diffusion_step_loss(predictor, model.schedule(), latent.latents, t, noise, delta);
}

AdamOptimizer::AdamOptimizer(std::vector<Var> params, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : params_(std::move(params)), lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamOptimizer::step() {
  ++iter_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(iter_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(iter_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k];
    if (!p.has_grad()) continue;
    auto g = p.grad().data();
    auto w = p.mutable_value().data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

HashTextEncoder default_text_encoder(const BackboneConfig& config) {
  return HashTextEncoder(config.text_dim, config.max_text_tokens);
}

TrainReport run_stage(UNetModel& model, const TrainStageConfig& cfg, const VideoClip& clip,
                      const std::string& caption, const TextEncoder& encoder) {
  cfg.validate();
  auto params = freeze_for_stage(model, cfg.stage);
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (auto& p : params) vars.push_back(p.var);

  const PatchifyCodec codec(model.config().reduction);
  const LatentVideo latent = codec.encode(clip);
  const ConditionEmbedding cond = encoder.encode(caption);

  TrainReport report;
  report.stage = cfg.stage;
  AdamOptimizer opt(vars, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick_t(1, model.schedule().total_steps());
  const auto start = std::chrono::steady_clock::now();

  for (int step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    double step_loss = 0.0;
    int first_t = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const int t = pick_t(rng);
      if (b == 0) first_t = t;
      const Tensor noise = Tensor::randn(latent.latents.shape(), rng);
      Var loss = diffusion_step_loss(model, latent, t, cond, noise, cfg.delta);
      if (cfg.batch_size > 1) loss = ops::scale(loss, 1.0 / static_cast<double>(cfg.batch_size));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError(std::string(to_string(cfg.stage)) + ": non-finite loss at step " + std::to_string(step));
      }
      step_loss += value;
      backward(loss);
    }
    opt.step();
    report.losses.push_back(step_loss);
    report.timesteps.push_back(first_t);
    report.timestamps.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  opt.zero_grad();
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.checksum = parameter_checksum(params);
  return report;
}

TrainReport run_stage(UNetModel& model, const TrainStageConfig& cfg, const VideoClip& clip,
                      const std::string& caption) {
  return run_stage(model, cfg, clip, caption, default_text_encoder(model.config()));
}

std::pair<TrainReport, TrainReport> run_dual_stage(UNetModel& model, const TrainStageConfig& cfg1,
                                                   const TrainStageConfig& cfg2, const VideoClip& clip,
                                                   const std::string& caption, const PlacementSpec& placement,
                                                   const PeftConfig& peft) {
  if (cfg1.stage != TrainingStage::kStage1 || cfg2.stage != TrainingStage::kStage2) {
    throw ConfigError("dual-stage training needs a stage1 config followed by a stage2 config");
  }
  if (!model.norm_injected()) throw StateError("stage1: norm tuning has not been injected");
  const HashTextEncoder encoder = default_text_encoder(model.config());
  TrainReport r1 = run_stage(model, cfg1, clip, caption, encoder);
  if (!model.adapters_injected()) inject_adapters(model, placement, peft);
  TrainReport r2 = run_stage(model, cfg2, clip, caption, encoder);
  return {std::move(r1), std::move(r2)};
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write train report " + path.string());
  const std::string stage = to_string(report.stage);
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    nlohmann::json line = {{"stage", stage},
                           {"step", i},
                           {"t", report.timesteps[i]},
                           {"loss", report.losses[i]},
                           {"timestamp", report.timestamps[i]}};
    out << line.dump() << '\n';
  }
  nlohmann::json summary = {{"stage", stage},
                            {"steps", report.losses.size()},
                            {"wall_clock_seconds", report.wall_clock_seconds},
                            {"checksum", hex64(report.checksum)}};
  out << summary.dump() << '\n';
}

}  // namespace dape
