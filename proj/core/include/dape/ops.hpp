#pragma once

#include <vector>

#include "dape/autograd.hpp"

namespace dape {

enum class NormKind { kGroup, kLayer };

/// Where the channel axis lives in a feature tensor.
///   kChannelsFirst: [N, C, ...spatial]  (conv features)
///   kChannelsLast:  [N, ...positions, C] (attention tokens)
enum class ChannelOrder { kChannelsFirst, kChannelsLast };

/// Canonical [outer, channels, inner] view of a feature tensor.
struct FeatureView {
  std::size_t outer = 0;
  std::size_t channels = 0;
  std::size_t inner = 0;
  ChannelOrder order = ChannelOrder::kChannelsFirst;

  static FeatureView of(const Shape& shape, ChannelOrder order);

  std::size_t index(std::size_t o, std::size_t c, std::size_t s) const {
    return order == ChannelOrder::kChannelsFirst ? (o * channels + c) * inner + s
                                                 : (o * inner + s) * channels + c;
  }
};

enum class Activation { kGelu, kSilu, kIdentity };

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

/// x * s with s of shape [1] (scalar) or [C] broadcast along the channel axis.
Var scale_channels(const Var& x, const Var& s, ChannelOrder order);

/// gamma[c] * x + beta[c]; either may be undefined (treated as 1 / 0).
Var channel_affine(const Var& x, const Var& gamma, const Var& beta, ChannelOrder order);

/// Zero-mean unit-variance normalization without affine parameters.
/// kGroup: statistics over (channels in group, all inner positions) per outer index.
/// kLayer: statistics over channels per (outer, inner position).
Var normalize(const Var& x, NormKind kind, std::size_t groups, double eps, ChannelOrder order);

/// 2-D convolution, stride 1. x [N, Cin, H, W], w [Cout, Cin/groups, k, k], bias [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t padding, std::size_t groups = 1);

/// x [..., K] times w [O, K]^T plus bias [O].
Var linear(const Var& x, const Var& w, const Var& bias);

Var activate(const Var& x, Activation act);
Var silu(const Var& x);
Var gelu(const Var& x);

Var reshape(const Var& x, Shape shape);
/// Axis permutation; out.shape[i] = in.shape[perm[i]].
Var permute(const Var& x, const std::vector<std::size_t>& perm);

/// Batched matmul: a [B, M, K] x b [B, K, N] (or b [B, N, K] when transpose_b).
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

Var softmax_lastdim(const Var& x);

/// Concatenate along axis 1.
Var concat_channels(const Var& a, const Var& b);

/// [L, D] -> [B, L, D]
Var repeat_batch(const Var& x, std::size_t batch);

/// Mean over elements of the Huber penalty of the residual.
Var huber_mean(const Var& residual, double delta);
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace ops

/// Elementwise Huber penalty: r^2/2 for |r| <= delta, else delta(|r| - delta/2).
double huber(double r, double delta);
double huber_derivative(double r, double delta);

double gelu_value(double x);

}  // namespace dape
