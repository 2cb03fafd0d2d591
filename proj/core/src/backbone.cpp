#include "dape/backbone.hpp"

#include <cmath>
#include <sstream>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape {

namespace {

constexpr auto kCF = ChannelOrder::kChannelsFirst;
constexpr auto kCL = ChannelOrder::kChannelsLast;

const char* norm_kind_name(NormKind k) { return k == NormKind::kGroup ? "group" : "layer"; }

Var tokens_from_features(const Var& x) {
  const Shape& s = x.shape();
  return ops::permute(ops::reshape(x, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

Var features_from_tokens(const Var& tokens, const Shape& feature_shape) {
  return ops::reshape(ops::permute(tokens, {0, 2, 1}), feature_shape);
}

Var split_heads(const Var& x, std::size_t heads) {
  const std::size_t b = x.shape()[0], t = x.shape()[1], c = x.shape()[2];
  Var r = ops::reshape(x, {b, t, heads, c / heads});
  return ops::reshape(ops::permute(r, {0, 2, 1, 3}), {b * heads, t, c / heads});
}

Var merge_heads(const Var& x, std::size_t batch, std::size_t heads) {
  const std::size_t t = x.shape()[1], dh = x.shape()[2];
  Var r = ops::reshape(x, {batch, heads, t, dh});
  return ops::reshape(ops::permute(r, {0, 2, 1, 3}), {batch, t, heads * dh});
}

}  // namespace

const char* to_string(BlockStage stage) {
  switch (stage) {
    case BlockStage::kEncoder: return "encoder";
    case BlockStage::kMiddle: return "middle";
    case BlockStage::kDecoder: return "decoder";
  }
  return "unknown";
}

void BackboneConfig::validate() const {
  if (image_channels == 0) throw ConfigError("image_channels must be positive");
  if (reduction == 0 || (reduction & (reduction - 1)) != 0) {
    throw ConfigError("reduction must be a power of two, got " + std::to_string(reduction));
  }
  if (latent_channels != 0 && latent_channels != resolved_latent_channels()) {
    throw ConfigError("latent_channels " + std::to_string(latent_channels) +
                      " differs from the lossless patchify width image_channels*reduction^2 = " +
                      std::to_string(resolved_latent_channels()));
  }
  if (base_width == 0) throw ConfigError("base_width must be positive");
  for (std::size_t m : channel_mult) {
    if (m == 0) throw ConfigError("channel multipliers must be positive");
  }
  if (norm_groups == 0 || heads == 0) throw ConfigError("norm_groups and heads must be positive");
  const std::size_t w1 = base_width * channel_mult[0], w2 = base_width * channel_mult[1],
                    w3 = base_width * channel_mult[2];
  for (std::size_t c : {w1, w2, w3, w3 + w3, w3 + w2, w2 + w1}) {
    if (resnet_norm == NormKind::kGroup && c % norm_groups != 0) {
      throw ConfigError("channel width " + std::to_string(c) + " is not divisible by norm_groups " +
                        std::to_string(norm_groups));
    }
  }
  for (std::size_t c : {w1, w2, w3}) {
    if (c % heads != 0) throw ConfigError("channel width " + std::to_string(c) + " not divisible by heads");
    if (attention_norm == NormKind::kGroup && c % norm_groups != 0) {
      throw ConfigError("attention width " + std::to_string(c) + " is not divisible by norm_groups");
    }
  }
  if (text_dim == 0) throw ConfigError("text_dim must be positive");
  if (max_text_tokens < 2) throw ConfigError("max_text_tokens must be at least 2");
  if (train_timesteps < 1) throw ConfigError("train_timesteps must be positive");
  if (!(norm_epsilon > 0.0)) throw ConfigError("norm_epsilon must be positive");
  if (!(output_init_gain > 0.0)) throw ConfigError("output_init_gain must be positive");
}

std::string BackboneConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "image_channels=" << image_channels << ";reduction=" << reduction
     << ";latent_channels=" << resolved_latent_channels() << ";base_width=" << base_width
     << ";channel_mult=" << channel_mult[0] << ',' << channel_mult[1] << ',' << channel_mult[2]
     << ";norm_groups=" << norm_groups << ";heads=" << heads << ";text_dim=" << text_dim
     << ";max_text_tokens=" << max_text_tokens << ";train_timesteps=" << train_timesteps
     << ";resnet_norm=" << norm_kind_name(resnet_norm) << ";attention_norm=" << norm_kind_name(attention_norm)
     << ";norm_epsilon=" << norm_epsilon << ";output_init_gain=" << output_init_gain << ";seed=" << seed;
  return os.str();
}

std::uint64_t BackboneConfig::hash() const { return fnv1a(canonical()); }

Conv2d Conv2d::create(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng, double gain) {
  const double std = gain / std::sqrt(static_cast<double>(in * kernel * kernel));
  return Conv2d{Var(Tensor::randn({out, in, kernel, kernel}, rng, std)), Var(Tensor::zeros({out})), kernel / 2};
}

Linear Linear::create(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  return Linear{Var(Tensor::randn({out, in}, rng, std)), Var(Tensor::zeros({out}))};
}

Var ResnetBlock::forward(const Var& x, const Var& temb) const {
  Var h = conv1.forward(ops::silu(adjustable_norm_forward(norm1, x, kCF)));
  Var tp = ops::reshape(time_proj.forward(ops::silu(temb)), {conv1.weight.shape()[0]});
  h = ops::channel_affine(h, Var(), tp, kCF);
  h = conv2.forward(ops::silu(adjustable_norm_forward(norm2, h, kCF)));
  return ops::add(skip ? skip->forward(x) : x, h);
}

Var AttentionLayer::forward(const Var& tokens, const Var& context) const {
  const std::size_t batch = tokens.shape()[0];
  Var normed = adjustable_norm_forward(norm, tokens, kCL);
  Var kv_source = normed;
  if (kind == AttentionKind::kCross) {
    if (!context.defined()) throw StateError("cross attention requires a text context");
    kv_source = ops::repeat_batch(context, batch);
  }
  Var q = split_heads(query.forward(normed), heads);
  Var k = split_heads(key.forward(kv_source), heads);
  Var v = split_heads(value.forward(kv_source), heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.shape()[2]));
  Var attn = ops::softmax_lastdim(ops::scale(ops::bmm(q, k, true), scale));
  Var mixed = merge_heads(ops::bmm(attn, v), batch, heads);
  return ops::add(tokens, out.forward(mixed));
}

Var AttentionBlock::forward(const Var& x, const Var& temb, const Var& context) const {
  Var h = resnet.forward(x, temb);
  const Shape feature_shape = h.shape();
  Var tokens = tokens_from_features(h);
  tokens = self_attn.forward(tokens, Var());
  tokens = cross_attn.forward(tokens, context);
  if (adapter) {
    Var features = adapter_forward(*adapter, features_from_tokens(tokens, feature_shape));
    tokens = tokens_from_features(features);
  }
  // Temporal attention: each spatial position attends over the frame axis.
  Var temporal = ops::permute(tokens, {1, 0, 2});
  temporal = temporal_attn.forward(temporal, Var());
  tokens = ops::permute(temporal, {1, 0, 2});
  return features_from_tokens(tokens, feature_shape);
}

Tensor timestep_sinusoid(int t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::cos(t * freq);
    out[i + half] = std::sin(t * freq);
  }
  return out;
}

UNetModel::UNetModel(BackboneConfig config, NoiseSchedule schedule)
    : config_(std::move(config)), schedule_(std::move(schedule)) {}

UNetModel build_unet(const BackboneConfig& config) {
  config.validate();
  UNetModel model(config, NoiseSchedule::scaled_linear(config.train_timesteps));
  std::mt19937_64 rng(config.seed);

  const std::size_t cl = config.resolved_latent_channels();
  const std::size_t w1 = config.base_width * config.channel_mult[0];
  const std::size_t w2 = config.base_width * config.channel_mult[1];
  const std::size_t w3 = config.base_width * config.channel_mult[2];
  const std::size_t td = config.time_embed_dim();

  model.conv_in_ = Conv2d::create(cl, w1, 3, rng);
  model.time_mlp1_ = Linear::create(config.base_width, td, rng);
  model.time_mlp2_ = Linear::create(td, td, rng);

  struct Layout {
    BlockStage stage;
    std::size_t in, out;
  };
  const std::array<Layout, kNumAttentionBlocks> layout{{
      {BlockStage::kEncoder, w1, w1},
      {BlockStage::kEncoder, w1, w2},
      {BlockStage::kEncoder, w2, w3},
      {BlockStage::kMiddle, w3, w3},
      {BlockStage::kDecoder, w3 + w3, w3},
      {BlockStage::kDecoder, w3 + w2, w2},
      {BlockStage::kDecoder, w2 + w1, w1},
  }};

  auto make_attention = [&](AttentionKind kind, std::size_t c) {
    AttentionLayer a;
    a.kind = kind;
    a.heads = config.heads;
    a.norm = AdjustableNormState::create(config.attention_norm, c, config.norm_groups, config.norm_epsilon);
    const std::size_t kv_in = kind == AttentionKind::kCross ? config.text_dim : c;
    a.query = Linear::create(c, c, rng);
    a.key = Linear::create(kv_in, c, rng);
    a.value = Linear::create(kv_in, c, rng);
    a.out = Linear::create(c, c, rng);
    return a;
  };

  for (int i = 0; i < kNumAttentionBlocks; ++i) {
    const auto& l = layout[static_cast<std::size_t>(i)];
    AttentionBlock& b = model.blocks_[static_cast<std::size_t>(i)];
    b.index = i + 1;
    b.stage = l.stage;
    b.in_channels = l.in;
    b.out_channels = l.out;
    b.resnet.norm1 = AdjustableNormState::create(config.resnet_norm, l.in, config.norm_groups, config.norm_epsilon);
    b.resnet.conv1 = Conv2d::create(l.in, l.out, 3, rng);
    b.resnet.time_proj = Linear::create(td, l.out, rng);
    b.resnet.norm2 = AdjustableNormState::create(config.resnet_norm, l.out, config.norm_groups, config.norm_epsilon);
    b.resnet.conv2 = Conv2d::create(l.out, l.out, 3, rng);
    if (l.in != l.out) b.resnet.skip = Conv2d::create(l.in, l.out, 1, rng);
    b.self_attn = make_attention(AttentionKind::kSelf, l.out);
    b.cross_attn = make_attention(AttentionKind::kCross, l.out);
    b.temporal_attn = make_attention(AttentionKind::kTemporal, l.out);
  }
  model.conv_out_ = Conv2d::create(w1, cl, 3, rng, config.output_init_gain);
  return model;
}

Var UNetModel::time_embedding(int t) const {
  Var sinusoid(timestep_sinusoid(t, config_.base_width).reshaped({1, config_.base_width}));
  return time_mlp2_.forward(ops::silu(time_mlp1_.forward(sinusoid)));
}

Var UNetModel::forward(const Var& z_t, int t, const Var& cond, const ConditionHook* hook) const {
  const Shape& s = z_t.shape();
  if (s.size() != 4 || s[0] == 0 || s[1] != latent_channels() || s[2] == 0 || s[3] == 0) {
    throw ShapeError("latent must be [F, " + std::to_string(latent_channels()) + ", h, w], got " + shape_str(s));
  }
  if (cond.shape().size() != 2 || cond.shape()[1] != config_.text_dim || cond.shape()[0] == 0) {
    throw ShapeError("condition must be [L, " + std::to_string(config_.text_dim) + "], got " +
                     shape_str(cond.shape()));
  }
  if (t < 0 || t > schedule_.total_steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(schedule_.total_steps()) + "]");
  }
  if (!z_t.value().all_finite()) throw NumericError("non-finite value in the noisy latent");
  if (!cond.value().all_finite()) throw NumericError("non-finite value in the text condition");

  Var temb = time_embedding(t);
  Var h = conv_in_.forward(z_t);
  std::array<Var, 3> skips;
  for (std::size_t i = 0; i < 3; ++i) {
    h = blocks_[i].forward(h, temb, cond);
    skips[i] = h;
  }
  h = blocks_[3].forward(h, temb, cond);
  for (std::size_t i = 4; i < 7; ++i) {
    h = blocks_[i].forward(ops::concat_channels(h, skips[6 - i]), temb, cond);
    if (hook && *hook) {
      Tensor residual = (*hook)(blocks_[i].index, h.value());
      if (residual.shape() != h.shape()) {
        throw ShapeError("condition hook returned " + shape_str(residual.shape()) + " for block features " +
                         shape_str(h.shape()));
      }
      h = ops::add(h, Var(std::move(residual)));
    }
  }
  return conv_out_.forward(ops::silu(h));
}

Tensor UNetModel::predict(const Tensor& z_t, int t, const Tensor& cond, const ConditionHook* hook) const {
  return forward(Var(z_t), t, Var(cond), hook).value();
}

std::vector<NamedParameter> UNetModel::parameters() const {
  std::vector<NamedParameter> out;
  auto add = [&](std::string name, const Var& v, ParamRole role) {
    if (v.defined()) out.push_back({std::move(name), v, role});
  };
  auto add_conv = [&](const std::string& p, const Conv2d& c) {
    add(p + ".weight", c.weight, ParamRole::kBackbone);
    add(p + ".bias", c.bias, ParamRole::kBackbone);
  };
  auto add_linear = [&](const std::string& p, const Linear& l) {
    add(p + ".weight", l.weight, ParamRole::kBackbone);
    add(p + ".bias", l.bias, ParamRole::kBackbone);
  };
  auto add_norm = [&](const std::string& p, const AdjustableNormState& n) {
    const ParamRole role = n.adjustable() ? ParamRole::kNormSite : ParamRole::kBackbone;
    add(p + ".gamma", n.gamma, role);
    add(p + ".beta", n.beta, role);
    add(p + ".gamma0", n.gamma0, ParamRole::kNormSite);
  };
  auto add_attention = [&](const std::string& p, const AttentionLayer& a) {
    add_norm(p + ".norm", a.norm);
    add_linear(p + ".query", a.query);
    add_linear(p + ".key", a.key);
    add_linear(p + ".value", a.value);
    add_linear(p + ".out", a.out);
  };

  add_conv("conv_in", conv_in_);
  add_linear("time_mlp1", time_mlp1_);
  add_linear("time_mlp2", time_mlp2_);
  for (const auto& b : blocks_) {
    const std::string p = "blocks." + std::to_string(b.index);
    add_norm(p + ".resnet.norm1", b.resnet.norm1);
    add_conv(p + ".resnet.conv1", b.resnet.conv1);
    add_linear(p + ".resnet.time_proj", b.resnet.time_proj);
    add_norm(p + ".resnet.norm2", b.resnet.norm2);
    add_conv(p + ".resnet.conv2", b.resnet.conv2);
    if (b.resnet.skip) add_conv(p + ".resnet.skip", *b.resnet.skip);
    add_attention(p + ".self_attn", b.self_attn);
    add_attention(p + ".cross_attn", b.cross_attn);
    if (b.adapter) {
      for (auto& [name, v] : b.adapter->named_parameters()) add(p + ".adapter." + name, v, ParamRole::kAdapter);
    }
    add_attention(p + ".temporal_attn", b.temporal_attn);
  }
  add_conv("conv_out", conv_out_);
  return out;
}

std::size_t UNetModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.numel();
  return n;
}

std::vector<std::pair<std::string, AdjustableNormState*>> UNetModel::norm_sites() {
  std::vector<std::pair<std::string, AdjustableNormState*>> out;
  for (auto& b : blocks_) {
    const std::string p = "blocks." + std::to_string(b.index);
    out.emplace_back(p + ".resnet.norm1", &b.resnet.norm1);
    out.emplace_back(p + ".resnet.norm2", &b.resnet.norm2);
    out.emplace_back(p + ".self_attn.norm", &b.self_attn.norm);
    out.emplace_back(p + ".cross_attn.norm", &b.cross_attn.norm);
    out.emplace_back(p + ".temporal_attn.norm", &b.temporal_attn.norm);
  }
  return out;
}

std::size_t UNetModel::norm_site_count() const { return static_cast<std::size_t>(kNumAttentionBlocks) * 5; }

AttentionBlock& UNetModel::block(int index) {
  if (index < 1 || index > kNumAttentionBlocks) {
    throw ValidationError("attention block index " + std::to_string(index) + " outside 1..7");
  }
  return blocks_[static_cast<std::size_t>(index - 1)];
}

void UNetModel::set_all_requires_grad(bool on) {
  for (auto& p : parameters()) p.var.set_requires_grad(on);
}

UNetModel UNetModel::clone() const {
  UNetModel copy = build_unet(config_);
  copy.norm_injected_ = norm_injected_;
  copy.adapters_injected_ = adapters_injected_;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const AttentionBlock& src = blocks_[i];
    AttentionBlock& dst = copy.blocks_[i];
    const std::array<std::pair<const AdjustableNormState*, AdjustableNormState*>, 5> sites{{
        {&src.resnet.norm1, &dst.resnet.norm1},
        {&src.resnet.norm2, &dst.resnet.norm2},
        {&src.self_attn.norm, &dst.self_attn.norm},
        {&src.cross_attn.norm, &dst.cross_attn.norm},
        {&src.temporal_attn.norm, &dst.temporal_attn.norm},
    }};
    for (auto [s, d] : sites) {
      if (s->adjustable()) d->make_adjustable(s->gamma0.numel() > 1);
    }
    if (src.adapter) {
      VisualAdapterConfig ac;
      ac.bottleneck_ratio = src.adapter->channels / src.adapter->bottleneck;
      ac.activation = src.adapter->activation;
      ac.ln_epsilon = src.adapter->ln_epsilon;
      std::mt19937_64 rng(0);
      dst.adapter = VisualAdapterState::create(src.adapter->channels, ac, rng);
    }
  }
  const auto src_params = parameters();
  auto dst_params = copy.parameters();
  for (std::size_t i = 0; i < src_params.size(); ++i) {
    dst_params[i].var.mutable_value() = src_params[i].var.value();
    dst_params[i].var.set_requires_grad(src_params[i].var.requires_grad());
  }
  return copy;
}

std::vector<BlockHandle> list_attention_blocks(const UNetModel& model) {
  std::vector<BlockHandle> out;
  int enc = 0, mid = 0, dec = 0;
  for (const auto& b : model.blocks()) {
    int pos = 0;
    switch (b.stage) {
      case BlockStage::kEncoder: pos = enc++; break;
      case BlockStage::kMiddle: pos = mid++; break;
      case BlockStage::kDecoder: pos = dec++; break;
    }
    out.push_back(BlockHandle{b.index, b.stage, pos, b.out_channels,
                              std::string(to_string(b.stage)) + "." + std::to_string(pos) + ".cross_attn"});
  }
  return out;
}

}  // namespace dape
