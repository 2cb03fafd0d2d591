#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dape/flow.hpp"
#include "dape/http_client.hpp"
#include "dape/video.hpp"

namespace dape {

class FrameEmbedder {
 public:
  virtual ~FrameEmbedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed_frame(const VideoClip& clip, std::size_t frame) const = 0;
  virtual std::vector<double> embed_text(std::string_view text) const = 0;
};

/// Offline embedder. Frames: 8x8 average-pooled pixels plus a bias term, mapped
/// through a seeded Gaussian projection. Text: sum of seeded per-word vectors.
class StubFrameEmbedder final : public FrameEmbedder {
 public:
  explicit StubFrameEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);
  std::string name() const override { return "stub"; }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed_frame(const VideoClip& clip, std::size_t frame) const override;
  std::vector<double> embed_text(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// POSTs {"image": <base64 PNG>} or {"text": ...} and reads {"embedding": [...]}.
class HttpFrameEmbedder final : public FrameEmbedder {
 public:
  HttpFrameEmbedder(HttpClientConfig config, std::size_t dim);
  std::string name() const override { return "http:" + client_.config().endpoint; }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed_frame(const VideoClip& clip, std::size_t frame) const override;
  std::vector<double> embed_text(std::string_view text) const override;

 private:
  std::vector<double> parse(const nlohmann::json& reply) const;
  HttpJsonClient client_;
  std::size_t dim_;
};

enum class FramePairMode { kConsecutive, kAllPairs };

/// Mean cosine between unit-normalized frame embeddings over frame pairs.
double clip_frame(const FrameEmbedder& embedder, const VideoClip& clip,
                  FramePairMode mode = FramePairMode::kConsecutive);

inline constexpr double kPsnrCap = 99.0;

struct InterpolationScores {
  double int_err = 0.0;
  double int_psnr = 0.0;
};

/// Predicts each interior frame as the mean of its neighbours. int_err is the
/// MAE over all interior pixels; int_psnr averages per-frame PSNR (peak 1).
InterpolationScores interpolation_metrics(const VideoClip& clip);

/// Flow is estimated on source (t -> t+1); edited_t is sampled bilinearly at
/// p - flow(p) and compared with edited_{t+1} over in-bounds samples. Mean of
/// per-pair masked MSE; pairs without valid samples are skipped.
double warping_error(const FlowBackend& flow, const VideoClip& source, const VideoClip& edited);
double warping_error(const std::vector<FlowField>& flows, const VideoClip& edited);

/// Mean cosine between each frame embedding and the prompt embedding.
double clip_text(const FrameEmbedder& embedder, const VideoClip& clip, std::string_view prompt);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct MetricReport {
  std::string label;
  std::string source_id;
  std::string edited_id;
  std::string prompt;
  double clip_f = 0.0;
  double int_err = 0.0;
  double int_psnr = 0.0;
  double warp_err = 0.0;
  double clip_t = 0.0;
  std::string embedder;
  std::string flow_backend;
  std::string config_hash;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct MetricColumn {
  const char* key;
  const char* header;
  /// Displayed value = raw * 10^(-exponent).
  int scale_exponent;
  bool higher_is_better;
};

/// Column order and scale annotations of the results table.
const std::vector<MetricColumn>& metric_columns();

double metric_value(const MetricReport& r, std::string_view key);

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

struct EvaluateOptions {
  FramePairMode pair_mode = FramePairMode::kConsecutive;
  std::string config_hash;
  std::string label;
};

MetricReport evaluate(const VideoClip& source, const VideoClip& edited, const std::string& prompt,
                      const FrameEmbedder& embedder, const FlowBackend& flow, const EvaluateOptions& options = {});

/// Arithmetic mean of every metric; label "mean".
MetricReport aggregate(const std::vector<MetricReport>& reports);

/// Aligned text table, one row per report, optional summary row.
std::string render_table(const std::vector<MetricReport>& rows, const std::optional<MetricReport>& summary = {});

}  // namespace dape
