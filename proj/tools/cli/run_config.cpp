#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape::cli {

using nlohmann::json;

namespace {

const char* norm_name(NormKind k) { return k == NormKind::kGroup ? "group" : "layer"; }

NormKind parse_norm(const std::string& s) {
  if (s == "group") return NormKind::kGroup;
  if (s == "layer") return NormKind::kLayer;
  throw ConfigError("norm kind must be group or layer, got '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "silu") return Activation::kSilu;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("adapter activation must be gelu, silu or identity, got '" + s + "'");
}

json stage_json(const TrainStageConfig& c) {
  return {{"steps", c.steps}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"delta", c.delta}};
}

TrainStageConfig stage_from(const json& j, TrainStageConfig base, std::uint64_t seed) {
  base.steps = j.at("steps").get<int>();
  base.learning_rate = j.at("learning_rate").get<double>();
  base.batch_size = j.at("batch_size").get<std::size_t>();
  base.delta = j.at("delta").get<double>();
  base.seed = seed;
  base.validate();
  return base;
}

HttpClientConfig http_from(const json& j) {
  HttpClientConfig h;
  h.endpoint = j.at("endpoint").get<std::string>();
  h.timeout_seconds = j.at("timeout_seconds").get<double>();
  h.max_retries = j.at("max_retries").get<int>();
  return h;
}

void merge_known(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (base[it.key()].is_object()) {
      merge_known(base[it.key()], *it, path);
    } else {
      base[it.key()] = *it;
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like a.b.c=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  // Strings stay strings even when the text parses as a number ("5" as a placement).
  if (node->is_string() && !value.is_string()) value = raw;
  *node = value;
}

}  // namespace

json default_config_document() {
  const BackboneConfig b;
  const PeftConfig p;
  return {
      {"seed", 0},
      {"backbone",
       {{"image_channels", b.image_channels},
        {"reduction", b.reduction},
        {"latent_channels", b.latent_channels},
        {"base_width", b.base_width},
        {"channel_mult", b.channel_mult},
        {"norm_groups", b.norm_groups},
        {"heads", b.heads},
        {"text_dim", b.text_dim},
        {"max_text_tokens", b.max_text_tokens},
        {"train_timesteps", b.train_timesteps},
        {"resnet_norm", norm_name(b.resnet_norm)},
        {"attention_norm", norm_name(b.attention_norm)},
        {"norm_epsilon", b.norm_epsilon},
        {"output_init_gain", b.output_init_gain},
        {"seed", b.seed}}},
      {"peft",
       {{"placement", PlacementSpec().to_string()},
        {"per_channel_gamma0", p.per_channel_gamma0},
        {"adapter",
         {{"bottleneck_ratio", p.adapter.bottleneck_ratio},
          {"activation", "gelu"},
          {"ln_epsilon", p.adapter.ln_epsilon},
          {"down_init_std", p.adapter.down_init_std},
          {"dw_init_std", p.adapter.dw_init_std}}}}},
      {"train",
       {{"mode", "dual-stage"},
        {"stage1", stage_json(TrainStageConfig::stage1_defaults())},
        {"stage2", stage_json(TrainStageConfig::stage2_defaults())},
        {"one_stage", stage_json(TrainStageConfig::one_stage_defaults())}}},
      {"sampler", {{"num_steps", SamplerConfig{}.num_steps}, {"guidance_scale", SamplerConfig{}.guidance_scale}}},
      {"metrics",
       {{"embedder", "stub"},
        {"embed_dim", 64},
        {"flow", "block-matching"},
        {"pair_mode", "consecutive"},
        {"embedder_http", {{"endpoint", ""}, {"timeout_seconds", 30.0}, {"max_retries", 2}}}}},
      {"dataset",
       {{"motion_threshold", 4.0},
        {"cut_threshold", 0.25},
        {"size", 512},
        {"lengths", {32, 64, 128}},
        {"annotation_client", "stub"},
        {"annotation_http", {{"endpoint", ""}, {"timeout_seconds", 60.0}, {"max_retries", 3}}}}},
  };
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "dual-stage" || s == "dual_stage") return TrainMode::kDualStage;
  if (s == "one-stage" || s == "one_stage") return TrainMode::kOneStage;
  throw ConfigError("train mode must be dual-stage or one-stage, got '" + s + "'");
}

RunConfig resolve(const json& doc) {
  RunConfig c;
  c.document = doc;
  try {
    c.seed = doc.at("seed").get<std::uint64_t>();
    const json& b = doc.at("backbone");
    c.backbone.image_channels = b.at("image_channels").get<std::size_t>();
    c.backbone.reduction = b.at("reduction").get<std::size_t>();
    c.backbone.latent_channels = b.at("latent_channels").get<std::size_t>();
    c.backbone.base_width = b.at("base_width").get<std::size_t>();
    c.backbone.channel_mult = b.at("channel_mult").get<std::array<std::size_t, 3>>();
    c.backbone.norm_groups = b.at("norm_groups").get<std::size_t>();
    c.backbone.heads = b.at("heads").get<std::size_t>();
    c.backbone.text_dim = b.at("text_dim").get<std::size_t>();
    c.backbone.max_text_tokens = b.at("max_text_tokens").get<std::size_t>();
    c.backbone.train_timesteps = b.at("train_timesteps").get<int>();
    c.backbone.resnet_norm = parse_norm(b.at("resnet_norm").get<std::string>());
    c.backbone.attention_norm = parse_norm(b.at("attention_norm").get<std::string>());
    c.backbone.norm_epsilon = b.at("norm_epsilon").get<double>();
    c.backbone.output_init_gain = b.at("output_init_gain").get<double>();
    c.backbone.seed = b.at("seed").get<std::uint64_t>();
    c.backbone.validate();

    const json& p = doc.at("peft");
    c.placement = PlacementSpec::parse(p.at("placement").get<std::string>());
    c.peft.per_channel_gamma0 = p.at("per_channel_gamma0").get<bool>();
    const json& a = p.at("adapter");
    c.peft.adapter.bottleneck_ratio = a.at("bottleneck_ratio").get<std::size_t>();
    c.peft.adapter.activation = parse_activation(a.at("activation").get<std::string>());
    c.peft.adapter.ln_epsilon = a.at("ln_epsilon").get<double>();
    c.peft.adapter.down_init_std = a.at("down_init_std").get<double>();
    c.peft.adapter.dw_init_std = a.at("dw_init_std").get<double>();
    c.peft.adapter.validate();

    const json& t = doc.at("train");
    c.mode = parse_train_mode(t.at("mode").get<std::string>());
    c.stage1 = stage_from(t.at("stage1"), TrainStageConfig::stage1_defaults(), c.seed);
    c.stage2 = stage_from(t.at("stage2"), TrainStageConfig::stage2_defaults(), c.seed + 1);
    c.one_stage = stage_from(t.at("one_stage"), TrainStageConfig::one_stage_defaults(), c.seed);

    c.sampler.num_steps = doc.at("sampler").at("num_steps").get<int>();
    c.sampler.guidance_scale = doc.at("sampler").at("guidance_scale").get<double>();
    c.sampler.validate(c.backbone.train_timesteps);

    const json& m = doc.at("metrics");
    c.metrics.embedder = m.at("embedder").get<std::string>();
    c.metrics.embed_dim = m.at("embed_dim").get<std::size_t>();
    c.metrics.flow = m.at("flow").get<std::string>();
    const auto pm = m.at("pair_mode").get<std::string>();
    if (pm == "consecutive") {
      c.metrics.pair_mode = FramePairMode::kConsecutive;
    } else if (pm == "all") {
      c.metrics.pair_mode = FramePairMode::kAllPairs;
    } else {
      throw ConfigError("metrics.pair_mode must be consecutive or all");
    }
    c.metrics.embedder_http = http_from(m.at("embedder_http"));
    if (c.metrics.embedder != "stub" && c.metrics.embedder != "http") {
      throw ConfigError("metrics.embedder must be stub or http");
    }
    if (c.metrics.flow != "zero" && c.metrics.flow != "block-matching" && c.metrics.flow != "precomputed") {
      throw ConfigError("metrics.flow must be zero, block-matching or precomputed");
    }
    if (c.metrics.embed_dim == 0) throw ConfigError("metrics.embed_dim must be positive");

    const json& d = doc.at("dataset");
    c.dataset.curation.motion_threshold = d.at("motion_threshold").get<double>();
    c.dataset.curation.cut_threshold = d.at("cut_threshold").get<double>();
    c.dataset.curation.standardize.size = d.at("size").get<std::size_t>();
    c.dataset.curation.standardize.lengths = d.at("lengths").get<std::vector<std::size_t>>();
    c.dataset.curation.validate();
    c.dataset.annotation_client = d.at("annotation_client").get<std::string>();
    if (c.dataset.annotation_client != "stub" && c.dataset.annotation_client != "http") {
      throw ConfigError("dataset.annotation_client must be stub or http");
    }
    c.dataset.annotation_http = http_from(d.at("annotation_http"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const { return hex64(fnv1a(document.dump())); }

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json doc = default_config_document();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
    }
    merge_known(doc, user, "");
  }
  if (const char* ep = std::getenv("DAPE_ANNOTATION_ENDPOINT")) doc["dataset"]["annotation_http"]["endpoint"] = ep;
  if (const char* ep = std::getenv("DAPE_EMBEDDER_ENDPOINT")) doc["metrics"]["embedder_http"]["endpoint"] = ep;
  for (const auto& o : overrides) apply_override(doc, o);
  return resolve(doc);
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.json") << cfg.document.dump(2) << '\n';
  std::ofstream(dir / "config.hash") << cfg.hash() << '\n';
}

}  // namespace dape::cli
