// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rahf/feedback.hpp"

namespace rahf {

using json = nlohmann::json;

json record_to_json(const AnnotationRecord& r);
/// Parses and validates; type errors and invariant violations surface as
/// ValidationError with the field path.
AnnotationRecord record_from_json(const json& j);

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
std::vector<AnnotationRecord> read_annotations(std::istream& in);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

json points_to_json(const std::vector<Point>& pts);
std::vector<Point> points_from_json(const json& j, const std::string& field);

/// One line of a split index. Prediction splits reuse the layout; they carry
/// no raw points and annotator_count 0.
struct IndexedSample {
  ConsolidatedSample sample;
  std::optional<std::string> decoded;  // raw decoder text, predictions only
};

inline constexpr const char* kIndexFile = "index.ndjson";
inline constexpr const char* kHeatmapDir = "heatmaps";
inline constexpr const char* kImageDir = "images";

/// Writes <dir>/index.ndjson plus <dir>/heatmaps/<id>.{artifact,misalignment}.png.
void write_split(const std::filesystem::path& dir, const std::vector<IndexedSample>& samples);
std::vector<IndexedSample> read_split(const std::filesystem::path& dir);

/// File-name-safe form of an id.
std::string safe_file_stem(const std::string& id);

}  // namespace rahf
