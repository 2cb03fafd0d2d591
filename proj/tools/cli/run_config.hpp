#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dape/backbone.hpp"
#include "dape/dataset.hpp"
#include "dape/http_client.hpp"
#include "dape/metrics.hpp"
#include "dape/peft.hpp"
#include "dape/sampler.hpp"
#include "dape/trainer.hpp"

namespace dape::cli {

enum class TrainMode { kDualStage, kOneStage };

struct MetricsSettings {
  std::string embedder = "stub";
  std::size_t embed_dim = 64;
  std::string flow = "block-matching";
  FramePairMode pair_mode = FramePairMode::kConsecutive;
  HttpClientConfig embedder_http;
};

struct DatasetSettings {
  CurationConfig curation;
  std::string annotation_client = "stub";
  HttpClientConfig annotation_http;
};

/// Fully resolved and validated configuration of one run.
struct RunConfig {
  nlohmann::json document;
  std::uint64_t seed = 0;
  BackboneConfig backbone;
  PlacementSpec placement;
  PeftConfig peft;
  TrainMode mode = TrainMode::kDualStage;
  TrainStageConfig stage1, stage2, one_stage;
  SamplerConfig sampler;
  MetricsSettings metrics;
  DatasetSettings dataset;

  std::string hash() const;
};

nlohmann::json default_config_document();

/// Defaults <- optional file <- DAPE_* environment variables <- "a.b.c=value" overrides.
/// Unknown keys are configuration errors.
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

RunConfig resolve(const nlohmann::json& document);

/// Writes config.json (resolved document) and config.hash into dir.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

TrainMode parse_train_mode(const std::string& s);

}  // namespace dape::cli
