#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dape/annotation.hpp"
#include "dape/flow.hpp"
#include "dape/video.hpp"

namespace dape {

enum class Subject { kPeople, kAnimal, kVehicle, kArtifact, kFood, kEnvironment };
enum class Background { kIndoor, kUrban, kNatural, kBlurOrBlank };
enum class Event { kSports, kDaily, kPerformance, kDocumentary, kCooking };
enum class Complexity { kSimple, kModerate, kComplex };
enum class EditType { kSubjectModification, kBackgroundAlteration, kEventReorganization, kStyleAdjustment,
                      kRandomCombination };
enum class ReviewStatus { kPending, kApproved, kRejected };

std::string_view to_string(Subject v);
std::string_view to_string(Background v);
std::string_view to_string(Event v);
std::string_view to_string(Complexity v);
std::string_view to_string(EditType v);
std::string_view to_string(ReviewStatus v);

/// Each throws ValidationError naming the field for values outside the enumeration.
Subject parse_subject(std::string_view s);
Background parse_background(std::string_view s);
Event parse_event(std::string_view s);
Complexity parse_complexity(std::string_view s, std::string_view field = "complexity");
EditType parse_edit_type(std::string_view s);
ReviewStatus parse_review_status(std::string_view s);
/// "L1".."L5" -> 1..5
int parse_difficulty(std::string_view s);

inline constexpr std::size_t kNumEditTypes = 5;

struct EditPrompt {
  EditType edit_type = EditType::kSubjectModification;
  std::string text;
  int difficulty = 1;

  friend bool operator==(const EditPrompt&, const EditPrompt&) = default;
};

struct ComplexityScores {
  Complexity subject = Complexity::kSimple;
  Complexity background = Complexity::kSimple;
  Complexity event = Complexity::kSimple;

  friend bool operator==(const ComplexityScores&, const ComplexityScores&) = default;
};

struct DatasetRecord {
  std::string id;
  std::string caption;
  Subject subject = Subject::kPeople;
  Background background = Background::kIndoor;
  Event event = Event::kDaily;
  ComplexityScores complexity;
  std::vector<EditPrompt> prompts;
  std::string provenance;
  /// Frame directory, relative to the manifest.
  std::string frames_dir;
  /// Optional precomputed flow files (one per consecutive pair), relative to the manifest.
  std::vector<std::string> flow_files;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double fps = 0.0;
  double motion_score = 0.0;
  double cut_score = 0.0;
  ReviewStatus review_status = ReviewStatus::kPending;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct StandardizeConfig {
  std::size_t size = 512;
  std::vector<std::size_t> lengths{32, 64, 128};
};

struct StandardizePlan {
  bool accepted = false;
  std::string reason;
  std::size_t crop_y = 0, crop_x = 0, crop_side = 0;
  std::size_t out_frames = 0;
};

/// Geometry decision without touching pixels.
StandardizePlan plan_standardize(std::size_t frames, std::size_t height, std::size_t width,
                                 const StandardizeConfig& config = {});

struct StandardizeResult {
  std::optional<VideoClip> clip;
  std::string reason;
  bool accepted() const { return clip.has_value(); }
};

/// Centre square crop, bilinear resize to size x size, keep the leading frames.
StandardizeResult standardize(const VideoClip& video, const StandardizeConfig& config = {});

/// Bilinear resize of every frame (half-pixel centres).
VideoClip resize_bilinear(const VideoClip& clip, std::size_t height, std::size_t width);

struct FilterDecision {
  bool keep = true;
  double score = 0.0;
};

/// Mean flow magnitude over consecutive pairs; rejects iff score > threshold.
FilterDecision motion_filter(const VideoClip& clip, double threshold, const FlowBackend& flow);

/// Max over pairs of the mean absolute frame difference; rejects iff score > threshold.
FilterDecision scene_cut_filter(const VideoClip& clip, double threshold);

/// round(i (F - 1) / (count - 1)) for i = 0..count-1.
std::vector<std::size_t> sample_frame_indices(std::size_t frames, std::size_t count = 8);

DatasetRecord annotate(const AnnotationClient& client, const VideoClip& clip);

/// Validated prompts: at least one per edit type, difficulties L1-L5.
std::vector<EditPrompt> generate_prompts(const AnnotationClient& client, const DatasetRecord& record);

struct CurationConfig {
  StandardizeConfig standardize;
  double motion_threshold = 4.0;
  double cut_threshold = 0.25;

  void validate() const;
};

struct CurationOutcome {
  std::string id;
  /// Empty when the clip survived; otherwise the stage that rejected it.
  std::string rejected_at;
  std::string reason;
  std::optional<DatasetRecord> record;
  std::optional<VideoClip> clip;
};

/// standardize -> motion filter -> scene-cut filter -> annotate -> prompts.
CurationOutcome curate_clip(const VideoClip& video, const CurationConfig& config, const FlowBackend& flow,
                            const AnnotationClient& client);

}  // namespace dape
