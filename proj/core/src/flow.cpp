#include "dape/flow.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <limits>

#include "dape/error.hpp"

namespace dape {

FlowField::FlowField(std::size_t height, std::size_t width)
    : height_(height), width_(width), data_(2 * height * width, 0.0) {}

FlowField FlowField::constant(std::size_t height, std::size_t width, double dx, double dy) {
  FlowField f(height, width);
  for (std::size_t i = 0; i < height * width; ++i) {
    f.data_[2 * i] = dx;
    f.data_[2 * i + 1] = dy;
  }
  return f;
}

double FlowField::mean_magnitude() const {
  if (height_ * width_ == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < height_ * width_; ++i) s += std::hypot(data_[2 * i], data_[2 * i + 1]);
  return s / static_cast<double>(height_ * width_);
}

std::vector<FlowField> FlowBackend::flow_sequence(const VideoClip& clip) const {
  std::vector<FlowField> out;
  out.reserve(clip.frames() - 1);
  for (std::size_t t = 0; t + 1 < clip.frames(); ++t) {
    out.push_back(estimate(FrameView::of(clip, t), FrameView::of(clip, t + 1)));
  }
  return out;
}

std::string ConstantFlow::name() const { return fmt::format("constant({},{})", dx_, dy_); }

FlowField ConstantFlow::estimate(const FrameView& a, const FrameView&) const {
  return FlowField::constant(a.height, a.width, dx_, dy_);
}

BlockMatchingFlow::BlockMatchingFlow(BlockMatchingConfig config) : config_(config) {
  if (config_.max_side == 0 || config_.block == 0) throw ConfigError("block matching needs positive sizes");
}

namespace {

struct Gray {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

Gray downsample_gray(const FrameView& f, std::size_t factor) {
  Gray g;
  g.h = f.height / factor;
  g.w = f.width / factor;
  g.v.assign(g.h * g.w, 0.0);
  const double norm = 1.0 / static_cast<double>(factor * factor * f.channels);
  for (std::size_t y = 0; y < g.h; ++y) {
    for (std::size_t x = 0; x < g.w; ++x) {
      double s = 0.0;
      for (std::size_t dy = 0; dy < factor; ++dy) {
        const float* row = f.pixels.data() + ((y * factor + dy) * f.width + x * factor) * f.channels;
        for (std::size_t k = 0; k < factor * f.channels; ++k) s += row[k];
      }
      g.v[y * g.w + x] = s * norm;
    }
  }
  return g;
}

}  // namespace

FlowField BlockMatchingFlow::estimate(const FrameView& a, const FrameView& b) const {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw ValidationError("block matching needs frames of equal geometry");
  }
  const std::size_t longer = std::max(a.height, a.width);
  const std::size_t factor = std::max<std::size_t>(1, (longer + config_.max_side - 1) / config_.max_side);
  const Gray ga = downsample_gray(a, factor);
  const Gray gb = downsample_gray(b, factor);
  const std::size_t bs = config_.block;
  const long r = static_cast<long>(config_.radius);
  FlowField flow(a.height, a.width);
  if (ga.h == 0 || ga.w == 0) return flow;

  const std::size_t nby = (ga.h + bs - 1) / bs, nbx = (ga.w + bs - 1) / bs;
  std::vector<std::pair<long, long>> best(nby * nbx, {0, 0});
  for (std::size_t by = 0; by < nby; ++by) {
    for (std::size_t bx = 0; bx < nbx; ++bx) {
      const std::size_t y0 = by * bs, x0 = bx * bs;
      const std::size_t y1 = std::min(y0 + bs, ga.h), x1 = std::min(x0 + bs, ga.w);
      double best_cost = std::numeric_limits<double>::infinity();
      long best_d2 = 0;
      std::pair<long, long> arg{0, 0};
      for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          if (static_cast<long>(y0) + dy < 0 || static_cast<long>(y1) + dy > static_cast<long>(gb.h) ||
              static_cast<long>(x0) + dx < 0 || static_cast<long>(x1) + dx > static_cast<long>(gb.w)) {
            continue;
          }
          double cost = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
              cost += std::abs(ga.at(y, x) - gb.at(y + dy, x + dx));
            }
          }
          const long d2 = dx * dx + dy * dy;
          if (cost < best_cost || (cost == best_cost && d2 < best_d2)) {
            best_cost = cost;
            best_d2 = d2;
            arg = {dx, dy};
          }
        }
      }
      best[by * nbx + bx] = arg;
    }
  }
  const double s = static_cast<double>(factor);
  for (std::size_t y = 0; y < a.height; ++y) {
    const std::size_t by = std::min(y / factor / bs, nby - 1);
    for (std::size_t x = 0; x < a.width; ++x) {
      const std::size_t bx = std::min(x / factor / bs, nbx - 1);
      const auto [dx, dy] = best[by * nbx + bx];
      flow.set(y, x, s * static_cast<double>(dx), s * static_cast<double>(dy));
    }
  }
  return flow;
}

PrecomputedFlow::PrecomputedFlow(std::map<std::string, std::vector<std::filesystem::path>> files)
    : files_(std::move(files)) {}

FlowField PrecomputedFlow::estimate(const FrameView&, const FrameView&) const {
  throw StateError("precomputed flow is looked up per clip; use flow_sequence");
}

std::vector<FlowField> PrecomputedFlow::flow_sequence(const VideoClip& clip) const {
  auto it = files_.find(clip.id());
  if (it == files_.end()) throw ValidationError("no precomputed flow declared for clip '" + clip.id() + "'");
  if (it->second.size() + 1 != clip.frames()) {
    throw ValidationError(fmt::format("clip '{}' has {} frames but {} flow files", clip.id(), clip.frames(),
                                      it->second.size()));
  }
  std::vector<FlowField> out;
  for (const auto& p : it->second) {
    FlowField f = read_flo(p);
    if (f.height() != clip.height() || f.width() != clip.width()) {
      throw ValidationError(fmt::format("flow file {} is {}x{}, clip is {}x{}", p.string(), f.width(), f.height(),
                                        clip.width(), clip.height()));
    }
    out.push_back(std::move(f));
  }
  return out;
}

namespace {
constexpr float kFloTag = 202021.25f;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::int32_t w = static_cast<std::int32_t>(flow.width()), h = static_cast<std::int32_t>(flow.height());
  out.write(reinterpret_cast<const char*>(&kFloTag), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  for (double d : flow.data()) {
    const float f = static_cast<float>(d);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file " + path.string());
  float tag = 0;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&tag), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || tag != kFloTag || w <= 0 || h <= 0) throw IoError("malformed .flo header in " + path.string());
  FlowField f(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  std::vector<float> buf(2 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!in) throw IoError("truncated .flo payload in " + path.string());
  for (std::size_t y = 0; y < f.height(); ++y) {
    for (std::size_t x = 0; x < f.width(); ++x) {
      const std::size_t i = 2 * (y * f.width() + x);
      f.set(y, x, buf[i], buf[i + 1]);
    }
  }
  return f;
}

std::unique_ptr<FlowBackend> make_flow_backend(const std::string& name) {
  if (name == "zero") return std::make_unique<ZeroFlow>();
  if (name == "block-matching") return std::make_unique<BlockMatchingFlow>();
  throw ConfigError("unknown flow backend '" + name + "' (expected zero or block-matching)");
}

}  // namespace dape
