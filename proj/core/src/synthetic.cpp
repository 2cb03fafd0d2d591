#include "dape/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dape {

VideoClip synthetic_toy_clip(std::size_t frames, std::size_t size, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double cy = 0.3 * static_cast<double>(size) + 0.4 * static_cast<double>(size) * u(rng);
  const double cx0 = 0.25 * static_cast<double>(size);
  const double radius = 0.2 * static_cast<double>(size);
  return VideoClip::generate("toy", frames, size, size, channels, 8.0,
                             [&](std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
                               const double s = static_cast<double>(size);
                               const double base =
                                   0.35 + 0.25 * std::sin(phase + 2.0 * std::numbers::pi *
                                                                      (static_cast<double>(x + 2 * y) / s +
                                                                       static_cast<double>(c) / 3.0));
                               const double dx = static_cast<double>(x) - (cx0 + static_cast<double>(f));
                               const double dy = static_cast<double>(y) - cy;
                               const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
                               return static_cast<float>(std::clamp(base + 0.35 * blob, 0.0, 1.0));
                             });
}

namespace {

double texture(double x, double y) {
  constexpr double tau = 2.0 * std::numbers::pi;
  return 0.5 + 0.2 * std::sin(tau * x / 37.0) + 0.15 * std::sin(tau * (x / 53.0 + y / 29.0)) +
         0.1 * std::cos(tau * y / 23.0);
}

}  // namespace

VideoClip translating_texture(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                              double shift_px) {
  return VideoClip::generate(std::move(id), frames, height, width, 1, 8.0,
                             [&](std::size_t f, std::size_t y, std::size_t x, std::size_t) {
                               return static_cast<float>(texture(static_cast<double>(x) -
                                                                     shift_px * static_cast<double>(f),
                                                                 static_cast<double>(y)));
                             });
}

std::vector<VideoClip> synthetic_curation_corpus(std::size_t frames, std::size_t height, std::size_t width) {
  std::vector<VideoClip> out;
  out.push_back(translating_texture("static", frames, height, width, 0.0));
  out.push_back(translating_texture("translate", frames, height, width, 8.0));
  out.push_back(VideoClip::generate("hard_cut", frames, height, width, 1, 8.0,
                                    [&](std::size_t f, std::size_t y, std::size_t x, std::size_t) {
                                      const double v = texture(static_cast<double>(x), static_cast<double>(y));
                                      return static_cast<float>(f < frames / 2 ? 0.45 * v : 1.0 - 0.45 * v);
                                    }));
  return out;
}

}  // namespace dape
