#include "dape/norm.hpp"

#include "dape/error.hpp"

namespace dape {

AdjustableNormState AdjustableNormState::create(NormKind kind, std::size_t channels, std::size_t groups,
                                                double epsilon) {
  if (channels == 0) throw ConfigError("normalization site needs at least one channel");
  if (kind == NormKind::kGroup && (groups == 0 || channels % groups != 0)) {
    throw ConfigError(std::to_string(channels) + " channels cannot be split into " + std::to_string(groups) +
                      " norm groups");
  }
  if (!(epsilon >= 0.0)) throw ConfigError("norm epsilon must be non-negative");
  AdjustableNormState s;
  s.kind = kind;
  s.groups = kind == NormKind::kGroup ? groups : 1;
  s.epsilon = epsilon;
  s.gamma = Var(Tensor::ones({channels}));
  s.beta = Var(Tensor::zeros({channels}));
  return s;
}

void AdjustableNormState::make_adjustable(bool per_channel_gamma0) {
  if (adjustable()) throw StateError("normalization site already carries gamma0");
  gamma0 = Var(Tensor::zeros({per_channel_gamma0 ? channels() : std::size_t{1}}));
}

Var adjustable_norm_forward(const AdjustableNormState& state, const Var& z, ChannelOrder order) {
  const FeatureView view = FeatureView::of(z.shape(), order);
  if (view.channels != state.channels()) {
    throw ShapeError("norm site has " + std::to_string(state.channels()) + " channels, input " +
                     shape_str(z.shape()) + " has " + std::to_string(view.channels));
  }
  Var normed = ops::normalize(z, state.kind, state.groups, state.epsilon, order);
  Var out = ops::channel_affine(normed, state.gamma, state.beta, order);
  if (state.adjustable()) out = ops::add(out, ops::scale_channels(z, state.gamma0, order));
  return out;
}

}  // namespace dape
