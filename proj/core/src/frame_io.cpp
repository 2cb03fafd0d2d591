#include "dape/frame_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fmt/format.h>

#include "dape/error.hpp"

namespace dape {

namespace {

struct DecodedPng {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> bytes;
};

DecodedPng decode_png_file(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IngestionError("cannot decode " + path.string() + ": " + image.message);
  }
  DecodedPng out;
  // Colour inputs decode to RGB, grey ones stay single-channel.
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  out.width = image.width;
  out.height = image.height;
  out.channels = color ? 3 : 1;
  out.bytes.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IngestionError("cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

png_image make_write_image(const VideoClip& clip) {
  if (clip.channels() != 1 && clip.channels() != 3) {
    throw ValidationError(fmt::format("PNG output supports 1 or 3 channels, clip has {}", clip.channels()));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(clip.width());
  image.height = static_cast<png_uint_32>(clip.height());
  image.format = clip.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return image;
}

std::vector<std::uint8_t> quantize(const VideoClip& clip, std::size_t f) {
  const auto px = clip.frame(f);
  std::vector<std::uint8_t> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = static_cast<std::uint8_t>(std::lround(px[i] * 255.0f));
  return out;
}

}  // namespace

std::string frame_filename(std::size_t index) { return fmt::format("{:06d}.png", index); }

VideoClip read_frame_dir(const std::filesystem::path& dir, std::string id, double fps) {
  if (!std::filesystem::is_directory(dir)) throw IngestionError("frame directory not found: " + dir.string());
  std::vector<float> pixels;
  std::size_t frames = 0, w = 0, h = 0, c = 0;
  for (;; ++frames) {
    const auto path = dir / frame_filename(frames);
    if (!std::filesystem::exists(path)) break;
    DecodedPng png = decode_png_file(path);
    if (frames == 0) {
      w = png.width;
      h = png.height;
      c = png.channels;
    } else if (png.width != w || png.height != h || png.channels != c) {
      throw IngestionError(fmt::format("frame {} of {} has a different geometry", frames, dir.string()));
    }
    for (std::uint8_t b : png.bytes) pixels.push_back(static_cast<float>(b) / 255.0f);
  }
  if (frames == 0) throw IngestionError("no frames (000000.png) in " + dir.string());
  return VideoClip(std::move(id), frames, h, w, c, fps, std::move(pixels));
}

void write_frame_dir(const VideoClip& clip, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < clip.frames(); ++f) {
    png_image image = make_write_image(clip);
    const auto bytes = quantize(clip, f);
    const auto path = dir / frame_filename(f);
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
      throw IoError("cannot write " + path.string() + ": " + image.message);
    }
  }
}

std::vector<std::uint8_t> encode_png(const VideoClip& clip, std::size_t frame) {
  png_image image = make_write_image(clip);
  const auto bytes = quantize(clip, frame);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace dape
