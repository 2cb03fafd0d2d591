#pragma once

#include <cstdint>
#include <vector>

#include "dape/video.hpp"

namespace dape {

/// Smooth colour gradient with a soft blob drifting one pixel per frame.
VideoClip synthetic_toy_clip(std::size_t frames = 8, std::size_t size = 16, std::size_t channels = 3,
                             std::uint64_t seed = 0);

/// Grayscale sinusoid texture, shifted horizontally by `shift_px` each frame.
VideoClip translating_texture(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                              double shift_px);

/// Static texture, an 8 px/frame translation, and a clip with a hard cut
/// halfway through. Ids: "static", "translate", "hard_cut".
std::vector<VideoClip> synthetic_curation_corpus(std::size_t frames = 40, std::size_t height = 520,
                                                 std::size_t width = 600);

}  // namespace dape
