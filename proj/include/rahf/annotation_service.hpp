// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rahf/dataset_io.hpp"
#include "rahf/feedback.hpp"

namespace rahf {

struct AnnotationTask {
  std::string task_id;
  std::string image_id;  // records refer to their task by image id
  std::string prompt;
  std::string image_file;  // relative to the images directory
  int width = 0;
  int height = 0;
  int required_annotators = 3;
  int completed_count = 0;

  json to_json() const;
};

inline constexpr const char* kTaskManifest = "tasks.ndjson";

/// One JSON task per line: task_id, image_id, prompt, image, width, height
/// and optional required_annotators.
std::vector<AnnotationTask> read_task_manifest(const std::filesystem::path& path);
void write_task_manifest(const std::filesystem::path& path, const std::vector<AnnotationTask>& tasks);

class DuplicateSubmission : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Append-only NDJSON record log with an in-memory index rebuilt on open.
/// Submissions are serialized and fsynced before they are acknowledged.
/// A torn final line left by a crash is ignored on replay.
class AnnotationStore {
 public:
  AnnotationStore(std::filesystem::path log_path, std::vector<AnnotationTask> tasks);
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Least-completed incomplete task the annotator has not done; ties go to
  /// the lowest task_id.
  std::optional<AnnotationTask> next_task(const std::string& annotator_id) const;

  /// Returns the task's new completed count. Throws ValidationError (bad
  /// field or unknown task), DuplicateSubmission, or std::runtime_error on
  /// I/O failure.
  int submit(const AnnotationRecord& record);

  /// Records of every fully annotated task, one group per task in task_id
  /// order, each group in submission order.
  std::vector<std::vector<AnnotationRecord>> export_completed() const;

  std::optional<AnnotationTask> task_for_image(const std::string& image_id) const;
  std::vector<AnnotationTask> tasks() const;
  std::size_t record_count() const;
  /// Unparseable lines skipped during replay.
  std::size_t skipped_lines() const { return skipped_lines_; }

 private:
  void replay();
  void check_record(const AnnotationRecord& r, const AnnotationTask& t) const;

  std::filesystem::path path_;
  std::map<std::string, AnnotationTask> tasks_;           // by task_id
  std::map<std::string, std::string> task_by_image_;      // image_id -> task_id
  std::map<std::string, std::vector<AnnotationRecord>> records_;  // by task_id
  std::set<std::pair<std::string, std::string>> done_;   // (task_id, annotator)
  std::size_t total_ = 0;
  std::size_t skipped_lines_ = 0;
  int fd_ = -1;
  mutable std::shared_mutex mu_;
};

struct ServiceOptions {
  std::filesystem::path images_dir;
  std::optional<std::filesystem::path> ui_dir;  // serves <ui_dir>/index.html at "/"
};

/// HTTP front end:
///   GET  /api/tasks/next?annotator=ID  200 task JSON | 204 | 400
///   POST /api/annotations              200 | 400 {error, field} | 409
///   GET  /api/export                   NDJSON, groups contiguous
///   GET  /api/images/{image_id}        image bytes | 404
///   GET  /                             UI entry page
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServiceOptions opts);
  ~AnnotationServer();

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rahf
