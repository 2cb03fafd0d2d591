#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dape/checkpoint.hpp"
#include "dape/error.hpp"
#include "oracles.hpp"

using namespace dape;
using dape::testing::random_tensor;
using dape::testing::tiny_backbone;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dape_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

// Injected model with every PEFT parameter moved away from its init.
UNetModel trained_like_model(const PlacementSpec& placement, std::uint64_t seed) {
  auto model = build_unet(tiny_backbone());
  inject_norm_tuning(model);
  inject_adapters(model, placement);
  std::mt19937_64 rng(seed);
  for (auto role : {ParamRole::kNormSite, ParamRole::kAdapter})
    for (auto& p : parameters_with_role(model, role)) p.var.mutable_value() = random_tensor(p.var.shape(), rng, -0.2, 0.2);
  return model;
}

}  // namespace

TEST(Safetensors, RoundTripAndLayout) {
  PeftCheckpoint c;
  std::mt19937_64 rng(1);
  c.tensors["a.weight"] = random_tensor({2, 3}, rng);
  c.tensors["b"] = Tensor::scalar(-0.0);
  c.metadata["note"] = "x";
  const auto path = scratch("rt.safetensors");
  write_safetensors(path, c);
  const auto back = read_safetensors(path);
  EXPECT_EQ(back.tensors, c.tensors);
  EXPECT_EQ(back.metadata, c.metadata);

  std::ifstream in(path, std::ios::binary);
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | len_bytes[i];
  EXPECT_EQ(len % 8, 0u);
  EXPECT_EQ(fs::file_size(path), 8 + len + 7 * sizeof(double));
}

TEST(Safetensors, CorruptFilesRaiseIoError) {
  const auto path = scratch("bad.safetensors");
  std::ofstream(path, std::ios::binary) << "abc";
  EXPECT_THROW(read_safetensors(path), IoError);
  {
    std::ofstream out(path, std::ios::binary);
    const char header[] = "{not json";
    const std::uint64_t n = sizeof(header) - 1;
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xff));
    out.write(header, n);
  }
  EXPECT_THROW(read_safetensors(path), IoError);
  EXPECT_THROW(read_safetensors(scratch("missing.safetensors")), IoError);
}

TEST(PeftState, ApplyReproducesPredictions) {
  const auto source = trained_like_model(PlacementSpec({1, 2, 6, 7}), 2);
  const auto path = scratch("peft.safetensors");
  save_peft_checkpoint(path, source, PeftConfig{}, "cfg123");
  auto target = build_unet(tiny_backbone());
  load_peft_checkpoint(path, target);
  EXPECT_EQ(current_placement(target), PlacementSpec({1, 2, 6, 7}));
  std::mt19937_64 rng(3);
  const Tensor z = Tensor::randn({2, target.latent_channels(), 4, 4}, rng);
  const Tensor c = random_tensor({2, 8}, rng);
  EXPECT_EQ(target.predict(z, 50, c), source.predict(z, 50, c));
  EXPECT_EQ(read_safetensors(path).metadata.at("config_hash"), "cfg123");
}

TEST(PeftState, OnlyPeftParametersAreStored) {
  const auto model = trained_like_model(PlacementSpec(), 4);
  const auto ckpt = capture_peft_state(model, PeftConfig{});
  EXPECT_EQ(ckpt.tensors.size(), parameters_with_role(model, ParamRole::kNormSite).size() +
                                     parameters_with_role(model, ParamRole::kAdapter).size());
  for (const auto& p : parameters_with_role(model, ParamRole::kBackbone)) EXPECT_EQ(ckpt.tensors.count(p.name), 0u);
}

TEST(PeftState, MismatchesAreRejected) {
  const auto model = trained_like_model(PlacementSpec(), 5);
  const auto ckpt = capture_peft_state(model, PeftConfig{});

  auto other_backbone = build_unet(tiny_backbone(99));
  EXPECT_THROW(apply_peft_state(other_backbone, ckpt), StateError);

  auto wrong_placement = build_unet(tiny_backbone());
  inject_norm_tuning(wrong_placement);
  inject_adapters(wrong_placement, PlacementSpec({6}));
  EXPECT_THROW(apply_peft_state(wrong_placement, ckpt), StateError);

  auto missing = ckpt;
  missing.tensors.erase(missing.tensors.begin());
  auto fresh = build_unet(tiny_backbone());
  EXPECT_THROW(apply_peft_state(fresh, missing), StateError);

  auto extra = ckpt;
  extra.tensors["nonexistent.param"] = Tensor::scalar(1.0);
  auto fresh2 = build_unet(tiny_backbone());
  EXPECT_THROW(apply_peft_state(fresh2, extra), StateError);

  auto reshaped = ckpt;
  auto& first = reshaped.tensors.begin()->second;
  first = Tensor({first.numel() + 1});
  auto fresh3 = build_unet(tiny_backbone());
  EXPECT_THROW(apply_peft_state(fresh3, reshaped), ShapeError);
}

TEST(PeftState, FileHashIsContentHash) {
  const auto model = trained_like_model(PlacementSpec(), 6);
  const auto a = scratch("h1.safetensors"), b = scratch("h2.safetensors");
  save_peft_checkpoint(a, model, PeftConfig{});
  save_peft_checkpoint(b, model, PeftConfig{});
  EXPECT_EQ(file_hash(a), file_hash(b));
  save_peft_checkpoint(b, model, PeftConfig{}, "different");
  EXPECT_NE(file_hash(a), file_hash(b));
}
