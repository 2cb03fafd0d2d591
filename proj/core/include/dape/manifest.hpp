#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dape/dataset.hpp"

namespace dape {

inline constexpr int kManifestSchemaVersion = 1;

nlohmann::json to_json(const DatasetRecord& r);
/// Throws ValidationError for out-of-enumeration values and nlohmann errors for missing fields.
DatasetRecord record_from_json(const nlohmann::json& j);

/// JSON lines: a header {"schema_version": 1} then one record per line, sorted by id.
std::string manifest_to_string(std::vector<DatasetRecord> records);
/// Empty text gives an empty list. Malformed lines and duplicate ids raise ParseError with the line.
std::vector<DatasetRecord> manifest_from_string(const std::string& text);

void write_manifest(const std::filesystem::path& path, std::vector<DatasetRecord> records);
std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path);

}  // namespace dape
