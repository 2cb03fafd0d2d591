#include "dape/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "dape/error.hpp"

namespace dape {

namespace {

constexpr std::array<std::string_view, 6> kSubjects{"people", "animal", "vehicle", "artifact", "food", "environment"};
constexpr std::array<std::string_view, 4> kBackgrounds{"indoor", "urban", "natural", "blur_or_blank"};
constexpr std::array<std::string_view, 5> kEvents{"sports", "daily", "performance", "documentary", "cooking"};
constexpr std::array<std::string_view, 3> kComplexities{"simple", "moderate", "complex"};
constexpr std::array<std::string_view, 5> kEditTypes{"subject_modification", "background_alteration",
                                                     "event_reorganization", "style_adjustment",
                                                     "random_combination"};
constexpr std::array<std::string_view, 3> kReview{"pending", "approved", "rejected"};

template <typename E, std::size_t N>
E parse_enum(const std::array<std::string_view, N>& names, std::string_view s, std::string_view field) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  std::string allowed;
  for (auto n : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
  throw ValidationError(fmt::format("{} '{}' is not one of: {}", field, s, allowed));
}

}  // namespace

std::string_view to_string(Subject v) { return kSubjects[static_cast<std::size_t>(v)]; }
std::string_view to_string(Background v) { return kBackgrounds[static_cast<std::size_t>(v)]; }
std::string_view to_string(Event v) { return kEvents[static_cast<std::size_t>(v)]; }
std::string_view to_string(Complexity v) { return kComplexities[static_cast<std::size_t>(v)]; }
std::string_view to_string(EditType v) { return kEditTypes[static_cast<std::size_t>(v)]; }
std::string_view to_string(ReviewStatus v) { return kReview[static_cast<std::size_t>(v)]; }

Subject parse_subject(std::string_view s) { return parse_enum<Subject>(kSubjects, s, "subject"); }
Background parse_background(std::string_view s) { return parse_enum<Background>(kBackgrounds, s, "background"); }
Event parse_event(std::string_view s) { return parse_enum<Event>(kEvents, s, "event"); }
Complexity parse_complexity(std::string_view s, std::string_view field) {
  return parse_enum<Complexity>(kComplexities, s, field);
}
EditType parse_edit_type(std::string_view s) { return parse_enum<EditType>(kEditTypes, s, "edit_type"); }
ReviewStatus parse_review_status(std::string_view s) {
  return parse_enum<ReviewStatus>(kReview, s, "review_status");
}

int parse_difficulty(std::string_view s) {
  if (s.size() == 2 && s[0] == 'L' && s[1] >= '1' && s[1] <= '5') return s[1] - '0';
  throw ValidationError(fmt::format("difficulty '{}' is not one of L1-L5", s));
}

StandardizePlan plan_standardize(std::size_t frames, std::size_t height, std::size_t width,
                                 const StandardizeConfig& config) {
  StandardizePlan p;
  const std::size_t side = std::min(height, width);
  if (side < config.size) {
    p.reason = fmt::format("resolution {}x{} below {}x{}", width, height, config.size, config.size);
    return p;
  }
  for (std::size_t len : config.lengths) {
    if (len <= frames) p.out_frames = std::max(p.out_frames, len);
  }
  if (p.out_frames == 0) {
    p.reason = fmt::format("{} frames, fewer than the shortest standard length", frames);
    return p;
  }
  p.accepted = true;
  p.crop_side = side;
  p.crop_y = (height - side) / 2;
  p.crop_x = (width - side) / 2;
  return p;
}

VideoClip resize_bilinear(const VideoClip& clip, std::size_t height, std::size_t width) {
  const std::size_t H = clip.height(), W = clip.width(), C = clip.channels();
  if (H == height && W == width) return clip;
  std::vector<float> out(clip.frames() * height * width * C);
  const double sy = static_cast<double>(H) / static_cast<double>(height);
  const double sx = static_cast<double>(W) / static_cast<double>(width);
  auto coord = [](double pos, std::size_t n, std::size_t& i0, std::size_t& i1, double& a) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, n - 1);
    a = pos - static_cast<double>(i0);
  };
  std::size_t k = 0;
  for (std::size_t f = 0; f < clip.frames(); ++f) {
    for (std::size_t y = 0; y < height; ++y) {
      std::size_t y0, y1;
      double ay;
      coord((static_cast<double>(y) + 0.5) * sy - 0.5, H, y0, y1, ay);
      for (std::size_t x = 0; x < width; ++x) {
        std::size_t x0, x1;
        double ax;
        coord((static_cast<double>(x) + 0.5) * sx - 0.5, W, x0, x1, ax);
        for (std::size_t c = 0; c < C; ++c) {
          const double v = (1 - ay) * ((1 - ax) * clip.at(f, y0, x0, c) + ax * clip.at(f, y0, x1, c)) +
                           ay * ((1 - ax) * clip.at(f, y1, x0, c) + ax * clip.at(f, y1, x1, c));
          out[k++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return VideoClip(clip.id(), clip.frames(), height, width, C, clip.fps(), std::move(out));
}

StandardizeResult standardize(const VideoClip& video, const StandardizeConfig& config) {
  const StandardizePlan plan = plan_standardize(video.frames(), video.height(), video.width(), config);
  if (!plan.accepted) return {std::nullopt, plan.reason};
  const std::size_t C = video.channels(), s = plan.crop_side;
  std::vector<float> cropped(plan.out_frames * s * s * C);
  std::size_t k = 0;
  for (std::size_t f = 0; f < plan.out_frames; ++f) {
    for (std::size_t y = 0; y < s; ++y) {
      const auto row = video.frame(f).subspan(((plan.crop_y + y) * video.width() + plan.crop_x) * C, s * C);
      std::copy(row.begin(), row.end(), cropped.begin() + static_cast<std::ptrdiff_t>(k));
      k += s * C;
    }
  }
  VideoClip square(video.id(), plan.out_frames, s, s, C, video.fps(), std::move(cropped));
  return {resize_bilinear(square, config.size, config.size), ""};
}

FilterDecision motion_filter(const VideoClip& clip, double threshold, const FlowBackend& flow) {
  const auto flows = flow.flow_sequence(clip);
  double s = 0.0;
  for (const auto& f : flows) s += f.mean_magnitude();
  const double score = flows.empty() ? 0.0 : s / static_cast<double>(flows.size());
  return {!(score > threshold), score};
}

FilterDecision scene_cut_filter(const VideoClip& clip, double threshold) {
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < clip.frames(); ++t) {
    const auto a = clip.frame(t), b = clip.frame(t + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    worst = std::max(worst, s / static_cast<double>(a.size()));
  }
  return {!(worst > threshold), worst};
}

std::vector<std::size_t> sample_frame_indices(std::size_t frames, std::size_t count) {
  if (frames == 0 || count == 0) throw ValidationError("frame sampling needs frames and a positive count");
  std::vector<std::size_t> out;
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(i * (frames - 1)) / static_cast<double>(count - 1))));
  }
  return out;
}

DatasetRecord annotate(const AnnotationClient& client, const VideoClip& clip) {
  const RawAnnotation raw = client.describe(clip, sample_frame_indices(clip.frames()));
  if (raw.caption.empty()) throw ValidationError("annotation for '" + clip.id() + "' has an empty caption");
  DatasetRecord r;
  r.id = clip.id();
  r.caption = raw.caption;
  r.subject = parse_subject(raw.subject);
  r.background = parse_background(raw.background);
  r.event = parse_event(raw.event);
  r.complexity.subject = parse_complexity(raw.subject_complexity, "subject complexity");
  r.complexity.background = parse_complexity(raw.background_complexity, "background complexity");
  r.complexity.event = parse_complexity(raw.event_complexity, "event complexity");
  r.provenance = client.name();
  r.frames = clip.frames();
  r.height = clip.height();
  r.width = clip.width();
  r.fps = clip.fps();
  return r;
}

std::vector<EditPrompt> generate_prompts(const AnnotationClient& client, const DatasetRecord& record) {
  if (record.caption.empty()) throw ValidationError("record '" + record.id + "' has no caption to edit");
  std::vector<EditPrompt> out;
  std::array<bool, kNumEditTypes> seen{};
  for (const auto& raw : client.propose_edits(record.id, record.caption)) {
    EditPrompt p{parse_edit_type(raw.edit_type), raw.text, parse_difficulty(raw.difficulty)};
    if (p.text.empty()) throw ValidationError("empty edit prompt text for '" + record.id + "'");
    seen[static_cast<std::size_t>(p.edit_type)] = true;
    out.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < kNumEditTypes; ++i) {
    if (!seen[i]) {
      throw ValidationError(fmt::format("prompts for '{}' miss edit type {}", record.id,
                                        to_string(static_cast<EditType>(i))));
    }
  }
  return out;
}

void CurationConfig::validate() const {
  if (!(motion_threshold >= 0.0) || !(cut_threshold >= 0.0)) throw ConfigError("filter thresholds must be >= 0");
  if (standardize.size == 0 || standardize.lengths.empty()) throw ConfigError("invalid standardization config");
}

CurationOutcome curate_clip(const VideoClip& video, const CurationConfig& config, const FlowBackend& flow,
                            const AnnotationClient& client) {
  CurationOutcome out;
  out.id = video.id();
  StandardizeResult std_result = standardize(video, config.standardize);
  if (!std_result.accepted()) {
    out.rejected_at = "standardize";
    out.reason = std_result.reason;
    return out;
  }
  const VideoClip& clip = *std_result.clip;
  const FilterDecision motion = motion_filter(clip, config.motion_threshold, flow);
  if (!motion.keep) {
    out.rejected_at = "motion_filter";
    out.reason = fmt::format("mean flow magnitude {:.3f} > {}", motion.score, config.motion_threshold);
    return out;
  }
  const FilterDecision cut = scene_cut_filter(clip, config.cut_threshold);
  if (!cut.keep) {
    out.rejected_at = "scene_cut_filter";
    out.reason = fmt::format("max frame difference {:.3f} > {}", cut.score, config.cut_threshold);
    return out;
  }
  DatasetRecord record = annotate(client, clip);
  record.prompts = generate_prompts(client, record);
  record.motion_score = motion.score;
  record.cut_score = cut.score;
  out.record = std::move(record);
  out.clip = std::move(std_result.clip);
  return out;
}

}  // namespace dape
