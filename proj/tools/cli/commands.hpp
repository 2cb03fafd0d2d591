#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace dape::cli {

struct CommonArgs {
  std::filesystem::path config_file;
  std::vector<std::string> overrides;
};

struct TrainArgs {
  CommonArgs common;
  std::filesystem::path manifest;
  std::string video;
  std::string caption;
  std::optional<std::string> mode;
  std::optional<std::string> placement;
  std::filesystem::path out;
};

struct EditArgs {
  CommonArgs common;
  std::filesystem::path manifest;
  std::string video;
  std::string source_caption;
  std::string prompt;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
};

struct EvaluateArgs {
  CommonArgs common;
  std::filesystem::path source;
  std::filesystem::path edited;
  std::string prompt;
  std::filesystem::path pairs;
  std::filesystem::path manifest;
  double fps = 8.0;
  int workers = 1;
  std::filesystem::path out;
};

struct SweepArgs {
  CommonArgs common;
  std::filesystem::path manifest;
  std::string video;
  std::string caption;
  std::string prompt;
  std::optional<std::string> placements;
  std::filesystem::path out;
};

struct CurateArgs {
  CommonArgs common;
  std::filesystem::path input;
  double fps = 8.0;
  int workers = 1;
  std::filesystem::path out;
};

struct ReportArgs {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;
};

struct ReviewArgs {
  std::filesystem::path manifest;
  std::string video;
  std::string status;
  std::filesystem::path out;
};

struct SynthArgs {
  std::string kind;
  std::filesystem::path out;
};

void cmd_train(const TrainArgs& o);
void cmd_edit(const EditArgs& o);
void cmd_evaluate(const EvaluateArgs& o);
void cmd_sweep_placement(const SweepArgs& o);
void cmd_curate(const CurateArgs& o);
void cmd_report(const ReportArgs& o);
void cmd_review(const ReviewArgs& o);
void cmd_synth(const SynthArgs& o);

/// "1-7;1,2,6,7;5" -> placements; an empty list is a validation error.
std::vector<PlacementSpec> parse_placement_list(const std::string& text);

}  // namespace dape::cli
