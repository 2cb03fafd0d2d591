#include <gtest/gtest.h>

#include <filesystem>

#include "dape/error.hpp"
#include "dape/manifest.hpp"

using namespace dape;

namespace {

// Hand-rolled record generator covering every enumeration and field.
DatasetRecord random_record(std::mt19937_64& rng, const std::string& id) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  std::uniform_real_distribution<double> u(0.0, 10.0);
  DatasetRecord r;
  r.id = id;
  r.caption = "caption \"quoted\" ü " + std::to_string(pick(1000));
  r.subject = static_cast<Subject>(pick(6));
  r.background = static_cast<Background>(pick(4));
  r.event = static_cast<Event>(pick(5));
  r.complexity = {static_cast<Complexity>(pick(3)), static_cast<Complexity>(pick(3)), static_cast<Complexity>(pick(3))};
  for (int k = 0; k < 5 + pick(3); ++k)
    r.prompts.push_back({static_cast<EditType>(k % 5), "prompt " + std::to_string(k), 1 + pick(5)});
  r.provenance = pick(2) ? "stub" : "http:http://localhost:9";
  r.frames_dir = "frames/" + id;
  if (pick(2)) r.flow_files = {"flow/" + id + "/0.flo", "flow/" + id + "/1.flo"};
  r.frames = 32u << pick(3);
  r.height = r.width = 512;
  r.fps = u(rng) + 1.0;
  r.motion_score = u(rng);
  r.cut_score = u(rng) / 40.0;
  r.review_status = static_cast<ReviewStatus>(pick(3));
  return r;
}

}  // namespace

TEST(Manifest, RoundTripIsLosslessAndSorted) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DatasetRecord> records;
    for (int i = 0; i < 1 + trial % 6; ++i) records.push_back(random_record(rng, "v" + std::to_string((i * 7 + trial) % 13)));
    std::sort(records.begin(), records.end(), [](auto& a, auto& b) { return a.id < b.id; });
    records.erase(std::unique(records.begin(), records.end(), [](auto& a, auto& b) { return a.id == b.id; }),
                  records.end());
    auto shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::string text = manifest_to_string(shuffled);
    EXPECT_EQ(manifest_from_string(text), records);
    EXPECT_EQ(manifest_to_string(manifest_from_string(text)), text);
  }
}

TEST(Manifest, HeaderAndEmptyInput) {
  EXPECT_TRUE(manifest_from_string("").empty());
  EXPECT_TRUE(manifest_from_string("\n  \n").empty());
  EXPECT_EQ(manifest_to_string({}), "{\"schema_version\":1}\n");
  EXPECT_TRUE(manifest_from_string("{\"schema_version\":1}\n").empty());
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  std::mt19937_64 rng(2);
  const std::string header = "{\"schema_version\":1}\n";
  const std::string a = to_json(random_record(rng, "a")).dump() + "\n";
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      manifest_from_string(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of(header + a + a), 3u);
  EXPECT_EQ(line_of(header + a + "{broken\n"), 3u);
  EXPECT_EQ(line_of(a), 1u);
  EXPECT_EQ(line_of("{\"schema_version\":2}\n"), 1u);
  auto bad_enum = to_json(random_record(rng, "b"));
  bad_enum["subject"] = "robot";
  EXPECT_EQ(line_of(header + "\n" + bad_enum.dump() + "\n"), 3u);
  auto missing = to_json(random_record(rng, "c"));
  missing.erase("caption");
  EXPECT_EQ(line_of(header + missing.dump() + "\n"), 2u);
}

TEST(Manifest, FileRoundTrip) {
  std::mt19937_64 rng(3);
  const auto path = std::filesystem::temp_directory_path() / "dape_manifest_test.jsonl";
  std::vector<DatasetRecord> records{random_record(rng, "z"), random_record(rng, "m")};
  write_manifest(path, records);
  const auto back = read_manifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], records[1]);
  EXPECT_EQ(back[1], records[0]);
  EXPECT_THROW(read_manifest(path.string() + ".missing"), IoError);
}
