#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dape/tensor.hpp"

namespace dape {

/// Fixed-resolution frame sequence, layout [F, H, W, C], values in [0, 1].
class VideoClip {
 public:
  VideoClip(std::string id, std::size_t frames, std::size_t height, std::size_t width,
            std::size_t channels, double fps, std::vector<float> pixels);

  using PixelFn = std::function<float(std::size_t f, std::size_t y, std::size_t x, std::size_t c)>;
  static VideoClip generate(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                            std::size_t channels, double fps, const PixelFn& fn);

  const std::string& id() const noexcept { return id_; }
  double fps() const noexcept { return fps_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t frame_size() const noexcept { return height_ * width_ * channels_; }

  float at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[((f * height_ + y) * width_ + x) * channels_ + c];
  }
  std::span<const float> frame(std::size_t f) const {
    return std::span<const float>(pixels_).subspan(f * frame_size(), frame_size());
  }
  std::span<const float> pixels() const noexcept { return pixels_; }

  bool same_geometry(const VideoClip& other) const noexcept;

  /// Copy with a different id.
  VideoClip with_id(std::string id) const;

 private:
  std::string id_;
  std::size_t frames_, height_, width_, channels_;
  double fps_;
  std::vector<float> pixels_;
};

/// Per-frame latent tensor [F, C_l, h, w] the diffusion process operates on.
struct LatentVideo {
  Tensor latents;
  std::optional<int> timestep;

  std::size_t frames() const { return latents.dim(0); }
};

/// Fixed lossless space-to-depth autoencoder stand-in. Pixels p in [0,1] map
/// to 2p - 1; latent channel (c*d + dy)*d + dx holds pixel (y*d+dy, x*d+dx, c).
class PatchifyCodec {
 public:
  explicit PatchifyCodec(std::size_t reduction);

  std::size_t reduction() const noexcept { return reduction_; }
  std::size_t latent_channels(std::size_t image_channels) const {
    return image_channels * reduction_ * reduction_;
  }

  LatentVideo encode(const VideoClip& clip) const;
  /// Values are clamped into [0, 1] after the inverse mapping.
  VideoClip decode(const LatentVideo& latent, std::string id, double fps) const;

 private:
  std::size_t reduction_;
};

}  // namespace dape
