#include "dape/peft.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape {

namespace {

int parse_index(std::string_view s, std::string_view whole) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("malformed placement '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

PlacementSpec::PlacementSpec(std::set<int> indices) : indices_(std::move(indices)) {
  for (int i : indices_) {
    if (i < 1 || i > kNumAttentionBlocks) {
      throw ValidationError("placement index " + std::to_string(i) + " outside 1..7");
    }
  }
}

PlacementSpec PlacementSpec::all() { return PlacementSpec({1, 2, 3, 4, 5, 6, 7}); }

PlacementSpec PlacementSpec::parse(std::string_view text) {
  std::string_view t = text;
  while (!t.empty() && t.front() == ' ') t.remove_prefix(1);
  while (!t.empty() && t.back() == ' ') t.remove_suffix(1);
  if (t.empty() || t == "none" || t == "{}") return none();
  std::set<int> out;
  std::size_t start = 0;
  while (start <= t.size()) {
    const std::size_t comma = t.find(',', start);
    const std::string_view item = t.substr(start, comma == std::string_view::npos ? t.npos : comma - start);
    const std::size_t dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.insert(parse_index(item, text));
    } else {
      const int lo = parse_index(item.substr(0, dash), text);
      const int hi = parse_index(item.substr(dash + 1), text);
      if (lo > hi) throw ValidationError("descending placement range in '" + std::string(text) + "'");
      for (int i = lo; i <= hi; ++i) out.insert(i);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return PlacementSpec(std::move(out));
}

std::string PlacementSpec::to_string() const {
  if (indices_.empty()) return "none";
  std::vector<int> v(indices_.begin(), indices_.end());
  const bool contiguous = v.size() > 2 && v.back() - v.front() + 1 == static_cast<int>(v.size());
  if (contiguous) return std::to_string(v.front()) + "-" + std::to_string(v.back());
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<PlacementSpec> ablation_placements() {
  return {PlacementSpec({1, 2, 3, 4, 5, 6, 7}), PlacementSpec({1, 2, 6, 7}), PlacementSpec({3, 4, 5}),
          PlacementSpec({1, 2, 3}),             PlacementSpec({5, 6, 7}),    PlacementSpec({5})};
}

const char* to_string(TrainingStage stage) {
  switch (stage) {
    case TrainingStage::kStage1: return "stage1";
    case TrainingStage::kStage2: return "stage2";
    case TrainingStage::kOneStage: return "one_stage";
  }
  return "unknown";
}

TrainingStage parse_training_stage(std::string_view text) {
  if (text == "stage1") return TrainingStage::kStage1;
  if (text == "stage2") return TrainingStage::kStage2;
  if (text == "one_stage" || text == "one-stage") return TrainingStage::kOneStage;
  throw ValidationError("unknown training stage '" + std::string(text) + "'");
}

std::size_t inject_norm_tuning(UNetModel& model, const PeftConfig& config) {
  if (model.norm_injected()) throw StateError("norm tuning is already injected into this model");
  std::size_t count = 0;
  for (auto& [name, site] : model.norm_sites()) {
    site->make_adjustable(config.per_channel_gamma0);
    ++count;
  }
  model.mark_norm_injected();
  return count;
}

std::size_t inject_adapters(UNetModel& model, const PlacementSpec& placement, const PeftConfig& config) {
  config.adapter.validate();
  for (int idx : placement.indices()) {
    if (model.block(idx).adapter) {
      throw StateError("attention block " + std::to_string(idx) + " already has an adapter");
    }
  }
  std::size_t count = 0;
  for (int idx : placement.indices()) {
    AttentionBlock& b = model.block(idx);
    // Per-block stream so an adapter's init does not depend on which others exist.
    std::mt19937_64 rng(model.config().seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(idx)));
    b.adapter = VisualAdapterState::create(b.out_channels, config.adapter, rng);
    ++count;
  }
  model.mark_adapters_injected();
  return count;
}

PlacementSpec current_placement(const UNetModel& model) {
  std::set<int> idx;
  for (const auto& b : model.blocks()) {
    if (b.adapter) idx.insert(b.index);
  }
  return PlacementSpec(std::move(idx));
}

std::vector<NamedParameter> parameters_with_role(const UNetModel& model, ParamRole role) {
  std::vector<NamedParameter> out;
  for (auto& p : model.parameters()) {
    if (p.role == role) out.push_back(std::move(p));
  }
  return out;
}

std::vector<NamedParameter> trainable_parameters(const UNetModel& model, TrainingStage stage) {
  const bool want_norm = stage != TrainingStage::kStage2;
  const bool want_adapter = stage != TrainingStage::kStage1;
  if (want_norm && !model.norm_injected()) {
    throw StateError(std::string(to_string(stage)) + " needs norm tuning injected first");
  }
  if (want_adapter && !model.adapters_injected()) {
    throw StateError(std::string(to_string(stage)) + " needs adapters injected first");
  }
  std::vector<NamedParameter> out;
  for (auto& p : model.parameters()) {
    if ((want_norm && p.role == ParamRole::kNormSite) || (want_adapter && p.role == ParamRole::kAdapter)) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<NamedParameter> freeze_for_stage(UNetModel& model, TrainingStage stage) {
  auto trainable = trainable_parameters(model, stage);
  model.set_all_requires_grad(false);
  for (auto& p : trainable) p.var.set_requires_grad(true);
  return trainable;
}

std::uint64_t parameter_checksum(const std::vector<NamedParameter>& params) {
  std::uint64_t h = fnv1a(std::string_view("params"));
  for (const auto& p : params) {
    h = fnv1a(p.name, h);
    h = hash_tensor(p.var.value(), h);
  }
  return h;
}

}  // namespace dape
