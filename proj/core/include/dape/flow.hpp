#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dape/video.hpp"

namespace dape {

/// Dense displacement field [H, W, 2] in pixels, (dx, dy) per pixel. A flow
/// from frame a to frame b maps pixel p of a to p + flow(p) in b.
class FlowField {
 public:
  FlowField() = default;
  FlowField(std::size_t height, std::size_t width);
  static FlowField constant(std::size_t height, std::size_t width, double dx, double dy);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  double dx(std::size_t y, std::size_t x) const { return data_[2 * (y * width_ + x)]; }
  double dy(std::size_t y, std::size_t x) const { return data_[2 * (y * width_ + x) + 1]; }
  void set(std::size_t y, std::size_t x, double dx, double dy) {
    data_[2 * (y * width_ + x)] = dx;
    data_[2 * (y * width_ + x) + 1] = dy;
  }
  std::span<const double> data() const noexcept { return data_; }

  double mean_magnitude() const;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<double> data_;
};

/// Borrowed view of one frame [H, W, C].
struct FrameView {
  std::span<const float> pixels;
  std::size_t height, width, channels;

  static FrameView of(const VideoClip& clip, std::size_t f) {
    return {clip.frame(f), clip.height(), clip.width(), clip.channels()};
  }
};

class FlowBackend {
 public:
  virtual ~FlowBackend() = default;
  virtual std::string name() const = 0;
  virtual FlowField estimate(const FrameView& a, const FrameView& b) const = 0;
  /// Flows for every consecutive pair (t, t+1) of the clip.
  virtual std::vector<FlowField> flow_sequence(const VideoClip& clip) const;
};

/// Same displacement everywhere; (0, 0) gives the zero-flow stub.
class ConstantFlow : public FlowBackend {
 public:
  ConstantFlow(double dx, double dy) : dx_(dx), dy_(dy) {}
  std::string name() const override;
  FlowField estimate(const FrameView& a, const FrameView& b) const override;

 private:
  double dx_, dy_;
};

class ZeroFlow final : public ConstantFlow {
 public:
  ZeroFlow() : ConstantFlow(0.0, 0.0) {}
  std::string name() const override { return "zero"; }
};

struct BlockMatchingConfig {
  /// Frames are box-downsampled by an integer factor until the longer side is at most this.
  std::size_t max_side = 128;
  std::size_t block = 4;
  std::size_t radius = 4;
};

/// Exhaustive SAD block matching on a downsampled grayscale pyramid level.
/// Ties prefer the smallest displacement.
class BlockMatchingFlow final : public FlowBackend {
 public:
  explicit BlockMatchingFlow(BlockMatchingConfig config = {});
  std::string name() const override { return "block-matching"; }
  FlowField estimate(const FrameView& a, const FrameView& b) const override;

 private:
  BlockMatchingConfig config_;
};

/// Flow files (.flo, Middlebury layout) declared per clip id.
class PrecomputedFlow final : public FlowBackend {
 public:
  explicit PrecomputedFlow(std::map<std::string, std::vector<std::filesystem::path>> files);
  std::string name() const override { return "precomputed"; }
  /// Always throws: a file lookup needs the clip id.
  FlowField estimate(const FrameView& a, const FrameView& b) const override;
  std::vector<FlowField> flow_sequence(const VideoClip& clip) const override;

 private:
  std::map<std::string, std::vector<std::filesystem::path>> files_;
};

void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

/// Builds a backend by name: "zero", "block-matching".
std::unique_ptr<FlowBackend> make_flow_backend(const std::string& name);

}  // namespace dape
