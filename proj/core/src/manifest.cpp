#include "dape/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dape/error.hpp"

namespace dape {

using nlohmann::json;

json to_json(const DatasetRecord& r) {
  json prompts = json::array();
  for (const auto& p : r.prompts) {
    prompts.push_back({{"edit_type", to_string(p.edit_type)},
                       {"text", p.text},
                       {"difficulty", "L" + std::to_string(p.difficulty)}});
  }
  return {{"id", r.id},
          {"caption", r.caption},
          {"subject", to_string(r.subject)},
          {"background", to_string(r.background)},
          {"event", to_string(r.event)},
          {"complexity",
           {{"subject", to_string(r.complexity.subject)},
            {"background", to_string(r.complexity.background)},
            {"event", to_string(r.complexity.event)}}},
          {"prompts", prompts},
          {"provenance", r.provenance},
          {"frames_dir", r.frames_dir},
          {"flow_files", r.flow_files},
          {"frames", r.frames},
          {"height", r.height},
          {"width", r.width},
          {"fps", r.fps},
          {"motion_score", r.motion_score},
          {"cut_score", r.cut_score},
          {"review_status", to_string(r.review_status)}};
}

DatasetRecord record_from_json(const json& j) {
  DatasetRecord r;
  r.id = j.at("id").get<std::string>();
  if (r.id.empty()) throw ValidationError("record id is empty");
  r.caption = j.at("caption").get<std::string>();
  r.subject = parse_subject(j.at("subject").get<std::string>());
  r.background = parse_background(j.at("background").get<std::string>());
  r.event = parse_event(j.at("event").get<std::string>());
  const auto& c = j.at("complexity");
  r.complexity.subject = parse_complexity(c.at("subject").get<std::string>(), "subject complexity");
  r.complexity.background = parse_complexity(c.at("background").get<std::string>(), "background complexity");
  r.complexity.event = parse_complexity(c.at("event").get<std::string>(), "event complexity");
  for (const auto& p : j.at("prompts")) {
    r.prompts.push_back({parse_edit_type(p.at("edit_type").get<std::string>()), p.at("text").get<std::string>(),
                         parse_difficulty(p.at("difficulty").get<std::string>())});
  }
  r.provenance = j.value("provenance", "");
  r.frames_dir = j.value("frames_dir", "");
  r.flow_files = j.value("flow_files", std::vector<std::string>{});
  r.frames = j.value("frames", std::size_t{0});
  r.height = j.value("height", std::size_t{0});
  r.width = j.value("width", std::size_t{0});
  r.fps = j.value("fps", 0.0);
  r.motion_score = j.value("motion_score", 0.0);
  r.cut_score = j.value("cut_score", 0.0);
  r.review_status = parse_review_status(j.value("review_status", "pending"));
  return r;
}

std::string manifest_to_string(std::vector<DatasetRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::string out = json{{"schema_version", kManifestSchemaVersion}}.dump() + '\n';
  for (const auto& r : records) out += to_json(r).dump() + '\n';
  return out;
}

std::vector<DatasetRecord> manifest_from_string(const std::string& text) {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!header_seen) {
      header_seen = true;
      if (!j.is_object() || !j.contains("schema_version")) throw ParseError("missing schema_version header", lineno);
      if (j["schema_version"] != kManifestSchemaVersion) {
        throw ParseError("unsupported schema_version " + j["schema_version"].dump(), lineno);
      }
      continue;
    }
    DatasetRecord r;
    try {
      r = record_from_json(j);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!ids.insert(r.id).second) throw ParseError("duplicate video id '" + r.id + "'", lineno);
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

void write_manifest(const std::filesystem::path& path, std::vector<DatasetRecord> records) {
  const std::string text = manifest_to_string(std::move(records));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << text;
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_string(buf.str());
}

}  // namespace dape
