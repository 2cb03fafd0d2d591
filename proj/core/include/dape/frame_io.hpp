#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dape/video.hpp"

namespace dape {

/// Reads 000000.png, 000001.png, ... until the first gap. All frames must
/// share size and channel count (gray, gray+alpha, RGB or RGBA; alpha dropped).
VideoClip read_frame_dir(const std::filesystem::path& dir, std::string id, double fps);

/// Writes 8-bit PNG frames, creating the directory.
void write_frame_dir(const VideoClip& clip, const std::filesystem::path& dir);

std::string frame_filename(std::size_t index);

/// One frame as an in-memory 8-bit PNG.
std::vector<std::uint8_t> encode_png(const VideoClip& clip, std::size_t frame);

}  // namespace dape
