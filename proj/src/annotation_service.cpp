// SPDX-License-Identifier: Apache-2.0
#include "rahf/annotation_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>

namespace rahf {

namespace fs = std::filesystem;

json AnnotationTask::to_json() const {
  return json{{"task_id", task_id},
              {"image_id", image_id},
              {"prompt", prompt},
              {"image_url", "/api/images/" + image_id},
              {"width", width},
              {"height", height},
              {"required_annotators", required_annotators},
              {"completed_count", completed_count}};
}

std::vector<AnnotationTask> read_task_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open task manifest " + path.string());
  std::vector<AnnotationTask> out;
  std::set<std::string> ids, images;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "tasks line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where, e.what());
    }
    AnnotationTask t;
    try {
      t.task_id = j.at("task_id").get<std::string>();
      t.image_id = j.at("image_id").get<std::string>();
      t.prompt = j.at("prompt").get<std::string>();
      t.image_file = j.at("image").get<std::string>();
      t.width = j.at("width").get<int>();
      t.height = j.at("height").get<int>();
      t.required_annotators = j.value("required_annotators", 3);
    } catch (const json::exception& e) {
      throw ValidationError(where, e.what());
    }
    if (t.width <= 0 || t.height <= 0) throw ValidationError(where + ".width", "image dims must be positive");
    if (t.required_annotators < 1) throw ValidationError(where + ".required_annotators", "must be >= 1");
    if (!ids.insert(t.task_id).second) throw ValidationError(where + ".task_id", "duplicate task id");
    if (!images.insert(t.image_id).second) throw ValidationError(where + ".image_id", "duplicate image id");
    out.push_back(std::move(t));
  }
  return out;
}

void write_task_manifest(const fs::path& path, const std::vector<AnnotationTask>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tasks) {
    out << json{{"task_id", t.task_id},    {"image_id", t.image_id}, {"prompt", t.prompt},
                {"image", t.image_file},   {"width", t.width},       {"height", t.height},
                {"required_annotators", t.required_annotators}}
               .dump()
        << '\n';
  }
}

AnnotationStore::AnnotationStore(fs::path log_path, std::vector<AnnotationTask> tasks) : path_(std::move(log_path)) {
  for (auto& t : tasks) {
    t.completed_count = 0;
    if (!task_by_image_.emplace(t.image_id, t.task_id).second) {
      throw std::invalid_argument("two tasks share image id " + t.image_id);
    }
    const std::string id = t.task_id;
    if (!tasks_.emplace(id, std::move(t)).second) throw std::invalid_argument("duplicate task id " + id);
  }
  replay();
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open store " + path_.string() + ": " + std::strerror(errno));
}

AnnotationStore::~AnnotationStore() {
  if (fd_ >= 0) ::close(fd_);
}

void AnnotationStore::replay() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    pos = terminated ? nl + 1 : text.size();
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const AnnotationRecord r = record_from_json(json::parse(line));
      auto it = task_by_image_.find(r.image_id);
      if (it == task_by_image_.end() || done_.count({it->second, r.annotator_id})) {
        ++skipped_lines_;
        continue;
      }
      done_.insert({it->second, r.annotator_id});
      records_[it->second].push_back(r);
      ++tasks_.at(it->second).completed_count;
      ++total_;
    } catch (const std::exception&) {
      ++skipped_lines_;
    }
  }
  if (!text.empty() && text.back() != '\n') {
    // Terminate a torn line so the next append starts cleanly.
    std::ofstream fix(path_, std::ios::app | std::ios::binary);
    fix << '\n';
  }
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& annotator_id) const {
  std::shared_lock lock(mu_);
  const AnnotationTask* best = nullptr;
  for (const auto& [id, t] : tasks_) {
    if (t.completed_count >= t.required_annotators || done_.count({id, annotator_id})) continue;
    // Map order is task_id order, so strict < keeps the lowest id on ties.
    if (!best || t.completed_count < best->completed_count) best = &t;
  }
  if (!best) return std::nullopt;
  return *best;
}

void AnnotationStore::check_record(const AnnotationRecord& r, const AnnotationTask& t) const {
  if (r.prompt != t.prompt) throw ValidationError("prompt", "does not match the task prompt");
  if (r.width != t.width || r.height != t.height) throw ValidationError("width", "does not match the task image size");
}

int AnnotationStore::submit(const AnnotationRecord& record) {
  validate_record(record);
  std::unique_lock lock(mu_);
  auto it = task_by_image_.find(record.image_id);
  if (it == task_by_image_.end()) throw ValidationError("image_id", "no task for image '" + record.image_id + "'");
  AnnotationTask& task = tasks_.at(it->second);
  check_record(record, task);
  if (done_.count({task.task_id, record.annotator_id})) {
    throw DuplicateSubmission("annotator '" + record.annotator_id + "' already submitted task '" + task.task_id + "'");
  }
  if (task.completed_count >= task.required_annotators) {
    throw DuplicateSubmission("task '" + task.task_id + "' is already complete");
  }
  const std::string line = record_to_json(record).dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("store write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw std::runtime_error(std::string("store fsync failed: ") + std::strerror(errno));
  done_.insert({task.task_id, record.annotator_id});
  records_[task.task_id].push_back(record);
  ++total_;
  return ++task.completed_count;
}

std::vector<std::vector<AnnotationRecord>> AnnotationStore::export_completed() const {
  std::shared_lock lock(mu_);
  std::vector<std::vector<AnnotationRecord>> out;
  for (const auto& [id, t] : tasks_) {
    if (t.completed_count < t.required_annotators) continue;
    out.push_back(records_.at(id));
  }
  return out;
}

std::optional<AnnotationTask> AnnotationStore::task_for_image(const std::string& image_id) const {
  std::shared_lock lock(mu_);
  auto it = task_by_image_.find(image_id);
  if (it == task_by_image_.end()) return std::nullopt;
  return tasks_.at(it->second);
}

std::vector<AnnotationTask> AnnotationStore::tasks() const {
  std::shared_lock lock(mu_);
  std::vector<AnnotationTask> out;
  for (const auto& [_, t] : tasks_) out.push_back(t);
  return out;
}

std::size_t AnnotationStore::record_count() const {
  std::shared_lock lock(mu_);
  return total_;
}

// ---- HTTP ---------------------------------------------------------------

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>RAHF annotation</title></head>"
    "<body><h1>RAHF annotation service</h1><p>No UI bundle is configured. The JSON API is available under "
    "<code>/api/</code>.</p></body></html>";

std::string content_type_for(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".html") return "text/html";
  return "application/octet-stream";
}

void json_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json j{{"error", message}};
  if (!field.empty()) j["field"] = field;
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  ServiceOptions opts;
  httplib::Server http;

  Impl(AnnotationStore& s, ServiceOptions o) : store(s), opts(std::move(o)) {}

  void routes() {
    http.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string annotator = req.get_param_value("annotator");
      if (annotator.empty()) return json_error(res, 400, "missing annotator parameter", "annotator");
      const auto task = store.next_task(annotator);
      if (!task) {
        res.status = 204;
        return;
      }
      res.set_content(task->to_json().dump(), "application/json");
    });

    http.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        return json_error(res, 400, std::string("malformed JSON: ") + e.what(), "body");
      }
      try {
        const AnnotationRecord r = record_from_json(body);
        const int count = store.submit(r);
        res.set_content(json{{"status", "ok"}, {"completed_count", count}}.dump(), "application/json");
      } catch (const ValidationError& e) {
        json_error(res, 400, e.what(), e.field());
      } catch (const DuplicateSubmission& e) {
        json_error(res, 409, e.what());
      } catch (const std::exception& e) {
        json_error(res, 500, e.what());
      }
    });

    http.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
      std::string body;
      for (const auto& group : store.export_completed()) {
        for (const auto& r : group) body += record_to_json(r).dump() + "\n";
      }
      res.set_content(body, "application/x-ndjson");
    });

    http.Get(R"(/api/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto task = store.task_for_image(req.matches[1]);
      if (!task) return json_error(res, 404, "unknown image", "image_id");
      const fs::path p = opts.images_dir / task->image_file;
      std::ifstream in(p, std::ios::binary);
      if (!in) return json_error(res, 404, "image file missing", "image_id");
      std::stringstream ss;
      ss << in.rdbuf();
      res.set_content(ss.str(), content_type_for(p));
    });

    http.Get("/", [this](const httplib::Request&, httplib::Response& res) {
      if (opts.ui_dir) {
        std::ifstream in(*opts.ui_dir / "index.html", std::ios::binary);
        if (in) {
          std::stringstream ss;
          ss << in.rdbuf();
          res.set_content(ss.str(), "text/html");
          return;
        }
      }
      res.set_content(kPlaceholderPage, "text/html");
    });
    if (opts.ui_dir) http.set_mount_point("/ui", opts.ui_dir->string());
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(store, std::move(opts))) {
  impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::serve() { return impl_->http.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace rahf
