#include "dape/annotation.hpp"

#include <array>
#include <fmt/format.h>

#include "dape/error.hpp"
#include "dape/frame_io.hpp"
#include "dape/hashing.hpp"

namespace dape {

namespace {

constexpr std::array<const char*, 6> kSubjects{"people", "animal", "vehicle", "artifact", "food", "environment"};
constexpr std::array<const char*, 4> kBackgrounds{"indoor", "urban", "natural", "blur_or_blank"};
constexpr std::array<const char*, 5> kEvents{"sports", "daily", "performance", "documentary", "cooking"};
constexpr std::array<const char*, 3> kComplexities{"simple", "moderate", "complex"};

constexpr std::array<const char*, 6> kSubjectNouns{"person", "dog", "car", "vase", "cake", "forest"};
constexpr std::array<const char*, 4> kPlaces{"a room", "a city street", "a meadow", "a plain backdrop"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& options, std::uint64_t h, int salt) {
  return options[(h >> (8 * salt)) % N];
}

std::string get_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ClientError(std::string("annotation reply lacks string field '") + key + "'", false);
  }
  return j[key].get<std::string>();
}

}  // namespace

RawAnnotation StubAnnotationClient::describe(const VideoClip& clip, const std::vector<std::size_t>&) const {
  const std::uint64_t h = fnv1a(clip.id());
  RawAnnotation a;
  const std::size_t s = (h >> 0) % kSubjects.size();
  const std::size_t b = (h >> 8) % kBackgrounds.size();
  a.subject = kSubjects[s];
  a.background = kBackgrounds[b];
  a.event = pick(kEvents, h, 2);
  a.subject_complexity = pick(kComplexities, h, 3);
  a.background_complexity = pick(kComplexities, h, 4);
  a.event_complexity = pick(kComplexities, h, 5);
  a.caption = fmt::format("a {} in {}", kSubjectNouns[s], kPlaces[b]);
  return a;
}

std::vector<RawEditPrompt> StubAnnotationClient::propose_edits(const std::string& video_id,
                                                               const std::string& caption) const {
  const std::uint64_t h = fnv1a(video_id);
  auto level = [&](int salt) { return fmt::format("L{}", 1 + (h >> (8 * salt)) % 5); };
  return {
      {"subject_modification", caption + ", the subject replaced by a robot", level(0)},
      {"background_alteration", caption + ", set on a snowy mountain", level(1)},
      {"event_reorganization", caption + ", now dancing", level(2)},
      {"style_adjustment", caption + ", in watercolor style", level(3)},
      {"random_combination", caption + ", as a robot dancing on the moon in pixel art", level(4)},
  };
}

RawAnnotation HttpAnnotationClient::describe(const VideoClip& clip,
                                             const std::vector<std::size_t>& frame_indices) const {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f : frame_indices) frames.push_back(base64_encode(encode_png(clip, f)));
  const auto reply = client_.post({{"task", "describe"}, {"video_id", clip.id()}, {"frames", frames}});
  RawAnnotation a;
  a.caption = get_string(reply, "caption");
  a.subject = get_string(reply, "subject");
  a.background = get_string(reply, "background");
  a.event = get_string(reply, "event");
  if (!reply.contains("complexity") || !reply["complexity"].is_object()) {
    throw ClientError("annotation reply lacks a 'complexity' object", false);
  }
  const auto& c = reply["complexity"];
  a.subject_complexity = get_string(c, "subject");
  a.background_complexity = get_string(c, "background");
  a.event_complexity = get_string(c, "event");
  return a;
}

std::vector<RawEditPrompt> HttpAnnotationClient::propose_edits(const std::string& video_id,
                                                               const std::string& caption) const {
  const auto reply = client_.post({{"task", "edit_prompts"}, {"video_id", video_id}, {"caption", caption}});
  if (!reply.contains("prompts") || !reply["prompts"].is_array()) {
    throw ClientError("edit-prompt reply lacks a 'prompts' array", false);
  }
  std::vector<RawEditPrompt> out;
  for (const auto& p : reply["prompts"]) {
    out.push_back({get_string(p, "edit_type"), get_string(p, "text"), get_string(p, "difficulty")});
  }
  return out;
}

}  // namespace dape
