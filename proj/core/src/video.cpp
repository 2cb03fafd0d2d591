#include "dape/video.hpp"

#include <algorithm>
#include <cmath>

#include "dape/error.hpp"

namespace dape {

VideoClip::VideoClip(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                     std::size_t channels, double fps, std::vector<float> pixels)
    : id_(std::move(id)),
      frames_(frames),
      height_(height),
      width_(width),
      channels_(channels),
      fps_(fps),
      pixels_(std::move(pixels)) {
  if (frames_ < 2) throw ValidationError("video clip '" + id_ + "' needs at least 2 frames");
  if (height_ == 0 || width_ == 0 || channels_ == 0) {
    throw ValidationError("video clip '" + id_ + "' has an empty frame geometry");
  }
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) {
    throw ValidationError("video clip '" + id_ + "' fps must be positive");
  }
  if (pixels_.size() != frames_ * height_ * width_ * channels_) {
    throw ShapeError("video clip '" + id_ + "' pixel buffer does not match its geometry");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValidationError("video clip '" + id_ + "' has a pixel outside [0, 1]");
    }
  }
}

VideoClip VideoClip::generate(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                              std::size_t channels, double fps, const PixelFn& fn) {
  std::vector<float> px(frames * height * width * channels);
  std::size_t i = 0;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t c = 0; c < channels; ++c) px[i++] = fn(f, y, x, c);
  return VideoClip(std::move(id), frames, height, width, channels, fps, std::move(px));
}

bool VideoClip::same_geometry(const VideoClip& other) const noexcept {
  return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_ &&
         channels_ == other.channels_;
}

VideoClip VideoClip::with_id(std::string id) const {
  VideoClip copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

PatchifyCodec::PatchifyCodec(std::size_t reduction) : reduction_(reduction) {
  if (reduction_ == 0 || (reduction_ & (reduction_ - 1)) != 0) {
    throw ConfigError("spatial reduction must be a power of two, got " + std::to_string(reduction_));
  }
}

LatentVideo PatchifyCodec::encode(const VideoClip& clip) const {
  const std::size_t d = reduction_;
  if (clip.height() % d || clip.width() % d) {
    throw ShapeError("frame size " + std::to_string(clip.height()) + "x" + std::to_string(clip.width()) +
                     " is not divisible by reduction " + std::to_string(d));
  }
  const std::size_t f = clip.frames(), c = clip.channels();
  const std::size_t h = clip.height() / d, w = clip.width() / d;
  const std::size_t cl = c * d * d;
  Tensor lat({f, cl, h, w});
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t dy = 0; dy < d; ++dy)
        for (std::size_t dx = 0; dx < d; ++dx) {
          const std::size_t ch = (ci * d + dy) * d + dx;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              const double p = clip.at(fi, i * d + dy, j * d + dx, ci);
              lat[((fi * cl + ch) * h + i) * w + j] = 2.0 * p - 1.0;
            }
        }
  return LatentVideo{std::move(lat), std::nullopt};
}

VideoClip PatchifyCodec::decode(const LatentVideo& latent, std::string id, double fps) const {
  const Tensor& lat = latent.latents;
  const std::size_t d = reduction_;
  if (lat.rank() != 4 || lat.dim(1) % (d * d)) {
    throw ShapeError("latent " + shape_str(lat.shape()) + " is not a patchified video for reduction " +
                     std::to_string(d));
  }
  const std::size_t f = lat.dim(0), cl = lat.dim(1), h = lat.dim(2), w = lat.dim(3);
  const std::size_t c = cl / (d * d);
  const std::size_t height = h * d, width = w * d;
  std::vector<float> px(f * height * width * c);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t dy = 0; dy < d; ++dy)
        for (std::size_t dx = 0; dx < d; ++dx) {
          const std::size_t ch = (ci * d + dy) * d + dx;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              const double v = (lat[((fi * cl + ch) * h + i) * w + j] + 1.0) * 0.5;
              if (!std::isfinite(v)) throw NumericError("non-finite latent value while decoding");
              const double clamped = std::clamp(v, 0.0, 1.0);
              px[((fi * height + i * d + dy) * width + j * d + dx) * c + ci] = static_cast<float>(clamped);
            }
        }
  return VideoClip(std::move(id), f, height, width, c, fps, std::move(px));
}

}  // namespace dape
