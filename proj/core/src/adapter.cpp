#include "dape/adapter.hpp"

#include <cmath>

#include "dape/error.hpp"

namespace dape {

void VisualAdapterConfig::validate() const {
  if (bottleneck_ratio == 0) throw ConfigError("adapter bottleneck ratio must be positive");
  if (!(ln_epsilon >= 0.0)) throw ConfigError("adapter layer-norm epsilon must be non-negative");
  if (!(dw_init_std >= 0.0)) throw ConfigError("adapter depth-wise init std must be non-negative");
}

VisualAdapterState VisualAdapterState::create(std::size_t channels, const VisualAdapterConfig& config,
                                              std::mt19937_64& rng) {
  config.validate();
  if (channels % config.bottleneck_ratio != 0 || channels < config.bottleneck_ratio) {
    throw ConfigError(std::to_string(channels) + " channels are not divisible by bottleneck ratio " +
                      std::to_string(config.bottleneck_ratio));
  }
  VisualAdapterState s;
  s.channels = channels;
  s.bottleneck = channels / config.bottleneck_ratio;
  s.activation = config.activation;
  s.ln_epsilon = config.ln_epsilon;
  const double down_std =
      config.down_init_std > 0.0 ? config.down_init_std : 1.0 / std::sqrt(static_cast<double>(channels));
  s.w0 = Var(Tensor::ones({1}));
  s.ln_gamma = Var(Tensor::ones({channels}));
  s.ln_beta = Var(Tensor::zeros({channels}));
  s.down_weight = Var(Tensor::randn({s.bottleneck, channels, 1, 1}, rng, down_std));
  s.down_bias = Var(Tensor::zeros({s.bottleneck}));
  s.dw_kernel = Var(Tensor::randn({s.bottleneck, 1, kDepthwiseKernel, kDepthwiseKernel}, rng, config.dw_init_std));
  s.up_weight = Var(Tensor::zeros({channels, s.bottleneck, 1, 1}));
  s.up_bias = Var(Tensor::zeros({channels}));
  return s;
}

std::vector<std::pair<std::string, Var>> VisualAdapterState::named_parameters() const {
  return {{"w0", w0},
          {"ln_gamma", ln_gamma},
          {"ln_beta", ln_beta},
          {"down_weight", down_weight},
          {"down_bias", down_bias},
          {"dw_kernel", dw_kernel},
          {"up_weight", up_weight},
          {"up_bias", up_bias}};
}

Var adapter_preactivation(const VisualAdapterState& state, const Var& z0) {
  if (z0.shape().size() != 4 || z0.shape()[1] != state.channels) {
    throw ShapeError("adapter expects [F, " + std::to_string(state.channels) + ", h, w], got " +
                     shape_str(z0.shape()));
  }
  constexpr auto kOrder = ChannelOrder::kChannelsFirst;
  Var normed = ops::normalize(z0, NormKind::kLayer, 1, state.ln_epsilon, kOrder);
  Var z_norm = ops::scale_channels(ops::channel_affine(normed, state.ln_gamma, state.ln_beta, kOrder), state.w0, kOrder);
  Var down = ops::conv2d(z_norm, state.down_weight, state.down_bias, 0);
  Var spatial = ops::conv2d(down, state.dw_kernel, Var(), kDepthwiseKernel / 2, state.bottleneck);
  return ops::add(down, spatial);
}

Var adapter_forward(const VisualAdapterState& state, const Var& z0) {
  Var f = adapter_preactivation(state, z0);
  Var up = ops::conv2d(ops::activate(f, state.activation), state.up_weight, state.up_bias, 0);
  return ops::add(z0, up);
}

}  // namespace dape
