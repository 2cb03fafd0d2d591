#pragma once

#include <string>
#include <vector>

#include "dape/http_client.hpp"
#include "dape/video.hpp"

namespace dape {

/// Unvalidated client output; enum fields are checked by the dataset module.
struct RawAnnotation {
  std::string caption;
  std::string subject;
  std::string background;
  std::string event;
  std::string subject_complexity;
  std::string background_complexity;
  std::string event_complexity;
};

struct RawEditPrompt {
  std::string edit_type;
  std::string text;
  std::string difficulty;
};

class AnnotationClient {
 public:
  virtual ~AnnotationClient() = default;
  virtual std::string name() const = 0;
  /// Caption, categories and complexities from the sampled frames.
  virtual RawAnnotation describe(const VideoClip& clip, const std::vector<std::size_t>& frame_indices) const = 0;
  /// Edit prompts for a captioned video.
  virtual std::vector<RawEditPrompt> propose_edits(const std::string& video_id,
                                                   const std::string& caption) const = 0;
};

/// Deterministic per video id; never touches the network.
class StubAnnotationClient final : public AnnotationClient {
 public:
  std::string name() const override { return "stub"; }
  RawAnnotation describe(const VideoClip& clip, const std::vector<std::size_t>& frame_indices) const override;
  std::vector<RawEditPrompt> propose_edits(const std::string& video_id, const std::string& caption) const override;
};

/// JSON service client. describe posts {"task": "describe", "video_id", "frames": [base64 PNG]} and
/// expects {"caption", "subject", "background", "event", "complexity": {"subject", "background", "event"}};
/// propose_edits posts {"task": "edit_prompts", "video_id", "caption"} and expects
/// {"prompts": [{"edit_type", "text", "difficulty"}]}.
class HttpAnnotationClient final : public AnnotationClient {
 public:
  explicit HttpAnnotationClient(HttpClientConfig config) : client_(std::move(config)) {}
  std::string name() const override { return "http:" + client_.config().endpoint; }
  RawAnnotation describe(const VideoClip& clip, const std::vector<std::size_t>& frame_indices) const override;
  std::vector<RawEditPrompt> propose_edits(const std::string& video_id, const std::string& caption) const override;

 private:
  HttpJsonClient client_;
};

}  // namespace dape
