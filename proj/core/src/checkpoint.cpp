#include "dape/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <nlohmann/json.hpp>

#include "dape/error.hpp"
#include "dape/hashing.hpp"

namespace dape {

namespace {

using nlohmann::json;

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kSilu: return "silu";
    case Activation::kIdentity: return "identity";
  }
  return "gelu";
}

Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "silu") return Activation::kSilu;
  if (s == "identity") return Activation::kIdentity;
  throw IoError("unknown adapter activation '" + s + "' in checkpoint");
}

std::string meta(const PeftCheckpoint& c, const std::string& key) {
  auto it = c.metadata.find(key);
  if (it == c.metadata.end()) throw IoError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

void write_safetensors(const std::filesystem::path& path, const PeftCheckpoint& ckpt) {
  json header = json::object();
  json md = json::object();
  for (const auto& [k, v] : ckpt.metadata) md[k] = v;
  header["__metadata__"] = md;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::uint64_t bytes = t.numel() * sizeof(double);
    header[name] = {{"dtype", "F64"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  // Pad so the payload starts 8-byte aligned.
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

PeftCheckpoint read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw IoError("checkpoint too short: " + path.string());
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), sizeof len);
  if (len > bytes.size() - 8) throw IoError("checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(std::string(bytes.data() + 8, len));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const char* payload = bytes.data() + 8 + len;
  const std::size_t payload_size = bytes.size() - 8 - len;

  PeftCheckpoint ckpt;
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "__metadata__") {
      for (auto m = it->begin(); m != it->end(); ++m) ckpt.metadata[m.key()] = m->get<std::string>();
      continue;
    }
    const json& entry = *it;
    if (entry.value("dtype", "") != "F64") throw IoError("tensor '" + it.key() + "' is not F64");
    Shape shape = entry.at("shape").get<Shape>();
    const auto offs = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offs.size() != 2 || offs[1] < offs[0] || offs[1] > payload_size ||
        offs[1] - offs[0] != shape_numel(shape) * sizeof(double)) {
      throw IoError("tensor '" + it.key() + "' has inconsistent data offsets");
    }
    std::vector<double> data(shape_numel(shape));
    std::memcpy(data.data(), payload + offs[0], offs[1] - offs[0]);
    ckpt.tensors.emplace(it.key(), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

PeftCheckpoint capture_peft_state(const UNetModel& model, const PeftConfig& config,
                                  const std::string& run_config_hash) {
  PeftCheckpoint c;
  for (const auto& p : model.parameters()) {
    if (p.role == ParamRole::kNormSite || p.role == ParamRole::kAdapter) c.tensors.emplace(p.name, p.var.value());
  }
  c.metadata["format"] = "dape-peft-v1";
  c.metadata["backbone_hash"] = hex64(model.config().hash());
  c.metadata["config_hash"] = run_config_hash;
  c.metadata["norm_injected"] = model.norm_injected() ? "1" : "0";
  c.metadata["adapters_injected"] = model.adapters_injected() ? "1" : "0";
  c.metadata["placement"] = current_placement(model).to_string();
  c.metadata["per_channel_gamma0"] = config.per_channel_gamma0 ? "1" : "0";
  c.metadata["adapter_bottleneck_ratio"] = std::to_string(config.adapter.bottleneck_ratio);
  c.metadata["adapter_activation"] = activation_name(config.adapter.activation);
  {
    std::ostringstream os;
    os.precision(17);
    os << config.adapter.ln_epsilon;
    c.metadata["adapter_ln_epsilon"] = os.str();
  }
  return c;
}

void apply_peft_state(UNetModel& model, const PeftCheckpoint& ckpt) {
  if (meta(ckpt, "format") != "dape-peft-v1") throw IoError("unsupported checkpoint format");
  if (meta(ckpt, "backbone_hash") != hex64(model.config().hash())) {
    throw StateError("checkpoint was trained against a different backbone config");
  }
  PeftConfig cfg;
  cfg.per_channel_gamma0 = meta(ckpt, "per_channel_gamma0") == "1";
  cfg.adapter.bottleneck_ratio = std::stoul(meta(ckpt, "adapter_bottleneck_ratio"));
  cfg.adapter.activation = parse_activation(meta(ckpt, "adapter_activation"));
  cfg.adapter.ln_epsilon = std::stod(meta(ckpt, "adapter_ln_epsilon"));

  if (meta(ckpt, "norm_injected") == "1" && !model.norm_injected()) inject_norm_tuning(model, cfg);
  if (meta(ckpt, "adapters_injected") == "1") {
    const PlacementSpec want = PlacementSpec::parse(meta(ckpt, "placement"));
    const PlacementSpec have = current_placement(model);
    if (have.empty()) {
      inject_adapters(model, want, cfg);
    } else if (!(have == want)) {
      throw StateError("model adapters at " + have.to_string() + " but checkpoint holds " + want.to_string());
    }
  }

  std::size_t matched = 0;
  for (auto& p : model.parameters()) {
    if (p.role == ParamRole::kBackbone) continue;
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw StateError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.var.shape()) {
      throw ShapeError("checkpoint tensor " + p.name + " has shape " + shape_str(it->second.shape()) +
                       ", model expects " + shape_str(p.var.shape()));
    }
    p.var.mutable_value() = it->second;
    ++matched;
  }
  if (matched != ckpt.tensors.size()) throw StateError("checkpoint holds parameters the model does not have");
}

void save_peft_checkpoint(const std::filesystem::path& path, const UNetModel& model, const PeftConfig& config,
                          const std::string& run_config_hash) {
  write_safetensors(path, capture_peft_state(model, config, run_config_hash));
}

void load_peft_checkpoint(const std::filesystem::path& path, UNetModel& model) {
  apply_peft_state(model, read_safetensors(path));
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(std::as_bytes(std::span(bytes.data(), bytes.size()))));
}

}  // namespace dape
