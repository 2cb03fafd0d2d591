#pragma once

#include "dape/autograd.hpp"
#include "dape/ops.hpp"

namespace dape {

/// Trainable state of one normalization site.
///
/// Before norm-tuning injection a site is an ordinary normalization layer
/// (gamma0 undefined). Injection adds gamma0 = 0, turning the site into
///   z_hat = gamma * Norm(z) + beta + gamma0 * z
/// which reproduces the original output exactly until gamma0 moves.
struct AdjustableNormState {
  NormKind kind = NormKind::kGroup;
  std::size_t groups = 1;
  double epsilon = 1e-5;
  Var gamma;
  Var beta;
  Var gamma0;

  static AdjustableNormState create(NormKind kind, std::size_t channels, std::size_t groups, double epsilon);

  std::size_t channels() const { return gamma.numel(); }
  bool adjustable() const noexcept { return gamma0.defined(); }
  /// Adds gamma0 = 0, scalar or one per channel.
  void make_adjustable(bool per_channel_gamma0);
};

Var adjustable_norm_forward(const AdjustableNormState& state, const Var& z, ChannelOrder order);

}  // namespace dape
