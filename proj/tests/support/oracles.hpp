#pragma once

// Straight-line reference implementations used to check the library. They
// share no code with core/ beyond plain data containers.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dape/adapter.hpp"
#include "dape/backbone.hpp"
#include "dape/flow.hpp"
#include "dape/norm.hpp"
#include "dape/tensor.hpp"
#include "dape/video.hpp"

namespace dape::testing {

/// Small backbone for fast tests: width 16, reduction 2 (12 latent channels).
BackboneConfig tiny_backbone(std::uint64_t seed = 0);

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);
VideoClip random_clip(std::size_t frames, std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng);
/// Every pixel of frame f equals values[f].
VideoClip uniform_frames_clip(const std::vector<float>& values, std::size_t h, std::size_t w, std::size_t c = 1);

/// gamma * Norm(z) + beta + gamma0 * z, with the channel axis at 1 (channels_first)
/// or last. Norm is group norm over (channels of a group x positions) or layer norm
/// over channels at each position; biased variance.
std::vector<double> norm_oracle(const std::vector<double>& z, const Shape& shape, bool channels_first, bool layer,
                                std::size_t groups, double eps, const std::vector<double>& gamma,
                                const std::vector<double>& beta, const std::vector<double>& gamma0);

struct AdapterOracleResult {
  std::vector<double> preactivation;  // [F, B, h, w]
  std::vector<double> output;         // [F, C, h, w]
};

/// Adapter evaluated with explicit loops over every index.
AdapterOracleResult adapter_oracle(const VisualAdapterState& s, const Tensor& z0);

double huber_oracle(double r, double delta);
double gelu_oracle(double x);

/// Per-pixel reference of the interpolation metrics.
std::pair<double, double> interpolation_oracle(const VideoClip& clip);
/// Per-pixel reference of the warping error given flows.
double warping_oracle(const std::vector<FlowField>& flows, const VideoClip& edited);
/// Mean cosine over consecutive pairs (or all pairs) of raw embeddings.
double mean_pair_cosine(const std::vector<std::vector<double>>& e, bool all_pairs);

/// Central difference of f around x[i].
double central_difference(const std::function<double()>& f, double& x, double h);

double relative_error(double a, double b, double floor = 1e-7);

}  // namespace dape::testing
