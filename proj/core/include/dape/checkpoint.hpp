#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dape/backbone.hpp"
#include "dape/peft.hpp"

namespace dape {

/// Named-tensor archive in the safetensors layout (u64 LE header length,
/// JSON header, raw little-endian F64 payload). Holds only norm-site and
/// adapter parameters plus metadata; backbone weights are never stored.
struct PeftCheckpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;
};

void write_safetensors(const std::filesystem::path& path, const PeftCheckpoint& ckpt);
PeftCheckpoint read_safetensors(const std::filesystem::path& path);

/// Extracts the PEFT state of `model`. `run_config_hash` is stored verbatim.
PeftCheckpoint capture_peft_state(const UNetModel& model, const PeftConfig& config,
                                  const std::string& run_config_hash = "");

/// Applies a captured state, injecting norm tuning / adapters as needed.
/// The backbone config hash must match.
void apply_peft_state(UNetModel& model, const PeftCheckpoint& ckpt);

void save_peft_checkpoint(const std::filesystem::path& path, const UNetModel& model, const PeftConfig& config,
                          const std::string& run_config_hash = "");
void load_peft_checkpoint(const std::filesystem::path& path, UNetModel& model);

/// FNV-1a of the file bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

}  // namespace dape
