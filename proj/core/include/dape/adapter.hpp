#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dape/autograd.hpp"
#include "dape/ops.hpp"

namespace dape {

struct VisualAdapterConfig {
  std::size_t bottleneck_ratio = 4;
  Activation activation = Activation::kGelu;
  double ln_epsilon = 1e-5;
  /// Standard deviation of the down projection init; <= 0 means 1/sqrt(channels).
  double down_init_std = 0.0;
  double dw_init_std = 0.05;

  void validate() const;
};

inline constexpr std::size_t kDepthwiseKernel = 5;

/// Bottleneck adapter placed after a cross-attention sub-block:
///   z_norm = w0 * LayerNorm(z0)
///   d      = Down(z_norm)                    (1x1, C -> C/r)
///   f      = d + dwconv5x5(d)                (one 5x5 filter per bottleneck channel)
///   z      = z0 + Up(act(f))                 (1x1, C/r -> C, zero-initialized)
struct VisualAdapterState {
  std::size_t channels = 0;
  std::size_t bottleneck = 0;
  Activation activation = Activation::kGelu;
  double ln_epsilon = 1e-5;

  Var w0;           // [1]
  Var ln_gamma;     // [C]
  Var ln_beta;      // [C]
  Var down_weight;  // [C/r, C, 1, 1]
  Var down_bias;    // [C/r]
  Var dw_kernel;    // [C/r, 1, 5, 5]
  Var up_weight;    // [C, C/r, 1, 1]
  Var up_bias;      // [C]

  static VisualAdapterState create(std::size_t channels, const VisualAdapterConfig& config, std::mt19937_64& rng);

  std::vector<std::pair<std::string, Var>> named_parameters() const;
};

/// f = Down(z_norm) + dwconv(Down(z_norm)), before the activation. [F, C/r, h, w]
Var adapter_preactivation(const VisualAdapterState& state, const Var& z0);

Var adapter_forward(const VisualAdapterState& state, const Var& z0);

}  // namespace dape
