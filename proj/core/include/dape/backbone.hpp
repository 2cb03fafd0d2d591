#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dape/adapter.hpp"
#include "dape/autograd.hpp"
#include "dape/norm.hpp"
#include "dape/schedule.hpp"
#include "dape/text_encoder.hpp"
#include "dape/video.hpp"

namespace dape {

inline constexpr int kNumAttentionBlocks = 7;

struct BackboneConfig {
  std::size_t image_channels = 3;
  std::size_t reduction = 8;
  /// 0 derives image_channels * reduction^2; any other value must equal it.
  std::size_t latent_channels = 0;
  std::size_t base_width = 32;
  std::array<std::size_t, 3> channel_mult{1, 2, 2};
  std::size_t norm_groups = 8;
  std::size_t heads = 2;
  std::size_t text_dim = 32;
  std::size_t max_text_tokens = 16;
  int train_timesteps = 1000;
  NormKind resnet_norm = NormKind::kGroup;
  NormKind attention_norm = NormKind::kLayer;
  double norm_epsilon = 1e-5;
  /// Multiplies the init std of the output convolution.
  double output_init_gain = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t resolved_latent_channels() const { return image_channels * reduction * reduction; }
  std::size_t time_embed_dim() const { return 4 * base_width; }
  /// Stable text form covering every field; hashed into checkpoints.
  std::string canonical() const;
  std::uint64_t hash() const;
};

enum class BlockStage { kEncoder, kMiddle, kDecoder };
const char* to_string(BlockStage stage);

enum class ParamRole { kBackbone, kNormSite, kAdapter };

struct NamedParameter {
  std::string name;
  Var var;
  ParamRole role;
};

struct Conv2d {
  Var weight;
  Var bias;
  std::size_t padding = 0;

  static Conv2d create(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng, double gain = 1.0);
  Var forward(const Var& x) const { return ops::conv2d(x, weight, bias, padding); }
};

struct Linear {
  Var weight;
  Var bias;

  static Linear create(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Var forward(const Var& x) const { return ops::linear(x, weight, bias); }
};

struct ResnetBlock {
  AdjustableNormState norm1;
  Conv2d conv1;
  Linear time_proj;
  AdjustableNormState norm2;
  Conv2d conv2;
  std::optional<Conv2d> skip;

  /// x [F, Cin, h, w], temb [1, Td] -> [F, Cout, h, w]
  Var forward(const Var& x, const Var& temb) const;
};

enum class AttentionKind { kSelf, kCross, kTemporal };

/// Pre-norm multi-head attention with a residual connection over tokens [B, T, C].
struct AttentionLayer {
  AttentionKind kind = AttentionKind::kSelf;
  std::size_t heads = 1;
  AdjustableNormState norm;
  Linear query, key, value, out;

  /// context [L, D] for cross attention, undefined otherwise.
  Var forward(const Var& tokens, const Var& context) const;
};

/// One of the seven indexed U-Net attention blocks: ResNet, spatial self
/// attention, cross attention on text, optional adapter, temporal attention.
struct AttentionBlock {
  int index = 0;
  BlockStage stage = BlockStage::kEncoder;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  ResnetBlock resnet;
  AttentionLayer self_attn;
  AttentionLayer cross_attn;
  AttentionLayer temporal_attn;
  std::optional<VisualAdapterState> adapter;

  Var forward(const Var& x, const Var& temb, const Var& context) const;
};

struct BlockHandle {
  int index;
  BlockStage stage;
  /// Position within its stage, 0-based.
  int stage_position;
  std::size_t channels;
  std::string name;
};

/// Auxiliary structural residual added to each decoder block's output.
using ConditionHook = std::function<Tensor(int block_index, const Tensor& features)>;

class UNetModel {
 public:
  UNetModel(UNetModel&&) noexcept = default;
  UNetModel& operator=(UNetModel&&) noexcept = default;
  UNetModel(const UNetModel&) = delete;
  UNetModel& operator=(const UNetModel&) = delete;

  const BackboneConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  std::size_t latent_channels() const noexcept { return config_.resolved_latent_channels(); }

  /// Noise prediction eps(z_t, t, c) with the same shape as z_t.
  Var forward(const Var& z_t, int t, const Var& cond, const ConditionHook* hook = nullptr) const;
  Tensor predict(const Tensor& z_t, int t, const Tensor& cond, const ConditionHook* hook = nullptr) const;

  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;

  std::vector<std::pair<std::string, AdjustableNormState*>> norm_sites();
  std::size_t norm_site_count() const;

  std::array<AttentionBlock, kNumAttentionBlocks>& blocks() noexcept { return blocks_; }
  const std::array<AttentionBlock, kNumAttentionBlocks>& blocks() const noexcept { return blocks_; }
  AttentionBlock& block(int index);

  bool norm_injected() const noexcept { return norm_injected_; }
  bool adapters_injected() const noexcept { return adapters_injected_; }
  void mark_norm_injected() noexcept { norm_injected_ = true; }
  void mark_adapters_injected() noexcept { adapters_injected_ = true; }

  void set_all_requires_grad(bool on);

  /// Independent deep copy (new parameter storage).
  UNetModel clone() const;

 private:
  friend UNetModel build_unet(const BackboneConfig& config);
  UNetModel(BackboneConfig config, NoiseSchedule schedule);

  Var time_embedding(int t) const;

  BackboneConfig config_;
  NoiseSchedule schedule_;
  Conv2d conv_in_;
  Linear time_mlp1_, time_mlp2_;
  std::array<AttentionBlock, kNumAttentionBlocks> blocks_;
  Conv2d conv_out_;
  bool norm_injected_ = false;
  bool adapters_injected_ = false;
};

UNetModel build_unet(const BackboneConfig& config);

/// Handles ordered ①..⑦: encoder (1-3), middle (4), decoder (5-7).
std::vector<BlockHandle> list_attention_blocks(const UNetModel& model);

/// Sinusoidal embedding [cos(t f_i), sin(t f_i)], f_i = 10000^(-i/half).
Tensor timestep_sinusoid(int t, std::size_t dim);

}  // namespace dape
