#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dape/adapter.hpp"
#include "dape/backbone.hpp"

namespace dape {

/// Set of attention block indices (1..7) that receive a visual adapter.
class PlacementSpec {
 public:
  /// Default placement: the first decoder block.
  PlacementSpec() : indices_{5} {}
  explicit PlacementSpec(std::set<int> indices);

  static PlacementSpec none() { return PlacementSpec(std::set<int>{}); }
  static PlacementSpec all();
  /// Parses "5", "1-7", "1,2,6,7", "3-5", or "" / "none".
  static PlacementSpec parse(std::string_view text);

  const std::set<int>& indices() const noexcept { return indices_; }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(int i) const { return indices_.count(i) > 0; }
  /// Compact form, e.g. "1-3", "1,2,6,7", "none".
  std::string to_string() const;

  friend bool operator==(const PlacementSpec&, const PlacementSpec&) = default;

 private:
  std::set<int> indices_;
};

/// The six placements of the adapter-position ablation, in table order.
std::vector<PlacementSpec> ablation_placements();

struct PeftConfig {
  bool per_channel_gamma0 = false;
  VisualAdapterConfig adapter;
};

enum class TrainingStage { kStage1, kStage2, kOneStage };
const char* to_string(TrainingStage stage);
TrainingStage parse_training_stage(std::string_view text);

/// Turns every ResNet and attention normalization site into an adjustable
/// site with gamma0 = 0. Returns the number of sites replaced.
std::size_t inject_norm_tuning(UNetModel& model, const PeftConfig& config = {});

/// Inserts one zero-initialized adapter after the cross-attention of each
/// indexed block. Returns the number of adapters added.
std::size_t inject_adapters(UNetModel& model, const PlacementSpec& placement, const PeftConfig& config = {});

/// Adapters currently present, as a placement.
PlacementSpec current_placement(const UNetModel& model);

/// stage1: every norm-site parameter; stage2: every adapter parameter; one_stage: both.
std::vector<NamedParameter> trainable_parameters(const UNetModel& model, TrainingStage stage);

/// Sets requires_grad on exactly the stage's parameters and clears it elsewhere.
std::vector<NamedParameter> freeze_for_stage(UNetModel& model, TrainingStage stage);

/// Parameters of a given role (backbone / norm sites / adapters).
std::vector<NamedParameter> parameters_with_role(const UNetModel& model, ParamRole role);

/// Order-sensitive hash of parameter names and values.
std::uint64_t parameter_checksum(const std::vector<NamedParameter>& params);

}  // namespace dape
