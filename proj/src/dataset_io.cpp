// SPDX-License-Identifier: Apache-2.0
#include "rahf/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "rahf/image.hpp"

namespace rahf {
namespace fs = std::filesystem;

json points_to_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const Point& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Point> points_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array of points");
  std::vector<Point> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& p = j[i];
    const std::string f = field + "[" + std::to_string(i) + "]";
    if (p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number()) {
      out.push_back({p[0].get<float>(), p[1].get<float>()});
    } else if (p.is_object() && p.contains("x") && p.contains("y") && p["x"].is_number() && p["y"].is_number()) {
      out.push_back({p["x"].get<float>(), p["y"].get<float>()});
    } else {
      throw ValidationError(f, "expected [x, y] or {\"x\":..,\"y\":..}");
    }
  }
  return out;
}

json record_to_json(const AnnotationRecord& r) {
  json scores = json::object();
  for (ScoreType t : kScoreTypes) scores[std::string(score_name(t))] = r.score(t);
  return json{{"image_id", r.image_id},
              {"prompt", r.prompt},
              {"annotator_id", r.annotator_id},
              {"width", r.width},
              {"height", r.height},
              {"artifact_points", points_to_json(r.artifact_points)},
              {"misalignment_points", points_to_json(r.misalignment_points)},
              {"misaligned_word_indices", r.misaligned_word_indices},
              {"scores", scores},
              {"skipped", r.skipped}};
}

namespace {

const json& field(const json& j, const char* name) {
  if (!j.contains(name)) throw ValidationError(name, "missing field");
  return j[name];
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ValidationError(name, "expected a string");
  return v.get<std::string>();
}

int int_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer()) throw ValidationError(name, "expected an integer");
  return v.get<int>();
}

}  // namespace

AnnotationRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record", "expected an object");
  AnnotationRecord r;
  r.image_id = string_field(j, "image_id");
  r.prompt = string_field(j, "prompt");
  r.annotator_id = string_field(j, "annotator_id");
  r.width = int_field(j, "width");
  r.height = int_field(j, "height");
  r.skipped = j.contains("skipped") && j["skipped"].is_boolean() && j["skipped"].get<bool>();
  r.artifact_points = points_from_json(j.value("artifact_points", json::array()), "artifact_points");
  r.misalignment_points = points_from_json(j.value("misalignment_points", json::array()), "misalignment_points");
  const json idx = j.value("misaligned_word_indices", json::array());
  if (!idx.is_array()) throw ValidationError("misaligned_word_indices", "expected an array");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!idx[i].is_number_integer()) {
      throw ValidationError("misaligned_word_indices[" + std::to_string(i) + "]", "expected an integer");
    }
    r.misaligned_word_indices.push_back(idx[i].get<int>());
  }
  const json scores = j.value("scores", json::object());
  if (!scores.is_object()) throw ValidationError("scores", "expected an object");
  for (ScoreType t : kScoreTypes) {
    const std::string name(score_name(t));
    const std::string path = "scores." + name;
    if (!scores.contains(name)) {
      if (r.skipped) continue;
      throw ValidationError(path, "missing score");
    }
    const json& s = scores[name];
    if (!s.is_number_integer()) throw ValidationError(path, "score must be an integer in 1..5");
    r.scores[static_cast<int>(t)] = s.get<int>();
  }
  validate_record(r);
  return r;
}

std::vector<AnnotationRecord> read_annotations(std::istream& in) {
  std::vector<AnnotationRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("line " + std::to_string(lineno), std::string("malformed record: ") + e.what());
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + "." + e.field(), e.what());
    }
  }
  return out;
}

std::vector<AnnotationRecord> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_annotations(in);
}

void write_annotations(const fs::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

void write_split(const fs::path& dir, const std::vector<IndexedSample>& samples) {
  fs::create_directories(dir / kHeatmapDir);
  std::ofstream index(dir / kIndexFile);
  if (!index) throw std::runtime_error("cannot write " + (dir / kIndexFile).string());
  for (const auto& entry : samples) {
    const ConsolidatedSample& s = entry.sample;
    const std::string stem = safe_file_stem(s.image_id);
    json scores = json::object();
    for (ScoreType t : kScoreTypes) scores[std::string(score_name(t))] = s.scores[static_cast<int>(t)];
    json line{{"image_id", s.image_id},
              {"prompt", s.prompt},
              {"width", s.artifact_heatmap.width()},
              {"height", s.artifact_heatmap.height()},
              {"scores", scores},
              {"keyword_labels", s.keyword_labels},
              {"annotator_count", s.annotator_count},
              {"artifact_points", points_to_json(s.artifact_points)},
              {"misalignment_points", points_to_json(s.misalignment_points)}};
    for (HeatmapType t : kHeatmapTypes) {
      const std::string rel = std::string(kHeatmapDir) + "/" + stem + "." + std::string(heatmap_name(t)) + ".png";
      write_heatmap_png(dir / rel, s.heatmap(t));
      line[std::string(heatmap_name(t)) + "_heatmap"] = rel;
    }
    if (entry.decoded) line["decoded"] = *entry.decoded;
    index << line.dump() << '\n';
  }
  index.flush();
  if (!index) throw std::runtime_error("failed writing " + (dir / kIndexFile).string());
}

std::vector<IndexedSample> read_split(const fs::path& dir) {
  std::ifstream in(dir / kIndexFile);
  if (!in) throw std::runtime_error("cannot open " + (dir / kIndexFile).string());
  std::vector<IndexedSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      IndexedSample e;
      ConsolidatedSample& s = e.sample;
      s.image_id = string_field(j, "image_id");
      s.prompt = string_field(j, "prompt");
      const json& scores = field(j, "scores");
      for (ScoreType t : kScoreTypes) s.scores[static_cast<int>(t)] = scores.at(std::string(score_name(t))).get<float>();
      for (int v : j.value("keyword_labels", std::vector<int>{})) s.keyword_labels.push_back(v ? 1 : 0);
      s.annotator_count = j.value("annotator_count", 0);
      s.artifact_points = points_from_json(j.value("artifact_points", json::array()), "artifact_points");
      s.misalignment_points = points_from_json(j.value("misalignment_points", json::array()), "misalignment_points");
      s.artifact_heatmap = read_heatmap_png(dir / string_field(j, "artifact_heatmap"));
      s.misalignment_heatmap = read_heatmap_png(dir / string_field(j, "misalignment_heatmap"));
      if (j.contains("decoded") && j["decoded"].is_string()) e.decoded = j["decoded"].get<std::string>();
      out.push_back(std::move(e));
    } catch (const ValidationError& e) {
      throw ValidationError(kIndexFile + std::string(":") + std::to_string(lineno) + "." + e.field(), e.what());
    } catch (const json::exception& e) {
      throw ValidationError(kIndexFile + std::string(":") + std::to_string(lineno), e.what());
    }
  }
  return out;
}

}  // namespace rahf
