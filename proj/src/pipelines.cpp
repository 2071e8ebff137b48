// SPDX-License-Identifier: Apache-2.0
#include "rahf/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rahf {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask dilate(const BinaryMask& mask, double radius_px) {
  if (radius_px < 0.0) throw std::invalid_argument("dilation radius must be >= 0");
  const int r = static_cast<int>(std::floor(radius_px));
  const double r2 = radius_px * radius_px;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= r2) offsets.emplace_back(dx, dy);
    }
  }
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      for (const auto& [dx, dy] : offsets) {
        const int nx = x + dx, ny = y + dy;
        if (nx >= 0 && ny >= 0 && nx < mask.width() && ny < mask.height()) out.set(nx, ny, true);
      }
    }
  }
  return out;
}

BinaryMask heatmap_to_mask(const Heatmap& heatmap, double threshold, double radius_px) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("mask threshold must lie in (0, 1)");
  BinaryMask seed(heatmap.width(), heatmap.height());
  for (int y = 0; y < heatmap.height(); ++y) {
    for (int x = 0; x < heatmap.width(); ++x) seed.set(x, y, heatmap.at(x, y) >= threshold);
  }
  return dilate(seed, radius_px);
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<float> v(static_cast<std::size_t>(mask.width()) * mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) v[static_cast<std::size_t>(y) * mask.width() + x] = mask.at(x, y) ? 1.0f : 0.0f;
  }
  write_gray_png(path, mask.width(), mask.height(), v);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  const Heatmap h = read_heatmap_png(path);
  BinaryMask m(h.width(), h.height());
  for (int y = 0; y < h.height(); ++y) {
    for (int x = 0; x < h.width(); ++x) m.set(x, y, h.at(x, y) >= 0.5f);
  }
  return m;
}

Heatmap RahfFeedbackModel::predict_heatmap(const Image& image, const std::string& prompt, HeatmapType type) const {
  return model_.predict_heatmap(image, prompt, type);
}

float RahfFeedbackModel::predict_score(const Image& image, const std::string& prompt, ScoreType type) const {
  return model_.predict_score(image, prompt, type);
}

Image RahfFeedbackModel::score_gradient(const Image& image, const std::string& prompt, ScoreType type) const {
  return model_.score_input_gradient(image, prompt, type);
}

std::vector<Image> StubGenerator::generate(const std::string& prompt, int n, std::uint64_t seed) {
  ++generate_calls_;
  std::vector<Image> out;
  const Rng root(seed ^ fnv1a(prompt));
  for (int i = 0; i < n; ++i) {
    Rng r = root.split(static_cast<std::uint64_t>(i));
    Image img(width_, height_, 3);
    for (float& v : img.storage()) v = static_cast<float>(r.uniform());
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> StubGenerator::inpaint(const Image& image, const BinaryMask& mask, const std::string& prompt, int n,
                                          std::uint64_t seed) {
  ++inpaint_calls_;
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw std::invalid_argument("inpaint: mask and image dims differ");
  }
  std::vector<Image> out;
  const Rng root(seed ^ fnv1a(prompt));
  for (int i = 0; i < n; ++i) {
    Rng r = root.split(static_cast<std::uint64_t>(i));
    Image img = image;
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        if (!mask.at(x, y)) continue;
        for (int c = 0; c < image.channels(); ++c) img.at(x, y, c) = static_cast<float>(r.uniform());
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Selection> filter_finetune_set(const std::map<std::string, std::vector<Candidate>>& candidates,
                                           double threshold) {
  std::vector<Selection> out;
  for (const auto& [prompt, list] : candidates) {
    if (list.empty()) throw std::invalid_argument("filter_finetune_set: prompt '" + prompt + "' has no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].score > list[best].score) best = i;
    }
    if (list[best].score >= threshold) out.push_back({prompt, best, list[best].score});
  }
  return out;
}

BestOfN best_of_n(const std::vector<Image>& images, const std::string& prompt, ScoreType type,
                  const FeedbackModel& model) {
  if (images.empty()) throw std::invalid_argument("best_of_n: no images");
  BestOfN out;
  for (const auto& img : images) out.scores.push_back(model.predict_score(img, prompt, type));
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    if (out.scores[i] > out.scores[out.index]) out.index = i;
  }
  out.score = out.scores[out.index];
  return out;
}

json RepairAudit::to_json() const {
  json j;
  j["prompt"] = prompt;
  j["mask_pixels"] = mask_pixels;
  j["mask_width"] = mask.width();
  j["mask_height"] = mask.height();
  float hmax = 0.0f;
  for (float v : heatmap.values()) hmax = std::max(hmax, v);
  j["heatmap_max"] = hmax;
  j["original_score"] = original_score;
  j["candidate_scores"] = candidate_scores;
  j["chosen"] = chosen ? json(*chosen) : json(nullptr);
  if (!error.empty()) j["error"] = error;
  return j;
}

RepairResult inpaint_repair(const Image& image, const std::string& prompt, const FeedbackModel& model,
                            GeneratorClient& generator, const RepairOptions& opts) {
  if (opts.candidates < 1) throw std::invalid_argument("inpaint_repair: candidates must be >= 1");
  RepairResult result;
  RepairAudit& audit = result.audit;
  audit.prompt = prompt;
  audit.heatmap = model.predict_heatmap(image, prompt, HeatmapType::kArtifact);
  const double radius = opts.radius_px >= 0.0 ? opts.radius_px : image.height() * kDefaultDilationFraction;
  audit.mask = heatmap_to_mask(audit.heatmap, opts.threshold, radius);
  audit.mask_pixels = audit.mask.count();
  audit.original_score = model.predict_score(image, prompt, ScoreType::kPlausibility);
  if (audit.mask_pixels == 0) {
    result.image = image;
    return result;
  }
  std::vector<Image> candidates;
  try {
    candidates = generator.inpaint(image, audit.mask, prompt, opts.candidates, opts.seed);
  } catch (const std::exception& e) {
    audit.error = e.what();
    throw RepairError(std::string("inpaint_repair: generator failed: ") + e.what(), audit);
  }
  if (candidates.empty()) {
    audit.error = "generator returned no candidates";
    throw RepairError("inpaint_repair: generator returned no candidates", audit);
  }
  for (const auto& c : candidates) {
    if (c.width() != image.width() || c.height() != image.height() || c.channels() != image.channels()) {
      audit.error = "generator returned an image with wrong dims";
      throw RepairError("inpaint_repair: generator returned an image with wrong dims", audit);
    }
  }
  const BestOfN best = best_of_n(candidates, prompt, ScoreType::kPlausibility, model);
  audit.candidate_scores = best.scores;
  audit.chosen = best.index;
  result.image = std::move(candidates[best.index]);
  return result;
}

Image guidance_step(const Image& image, const std::string& prompt, ScoreType type, double step_size,
                    const FeedbackModel& model) {
  if (step_size < 0.0 || !std::isfinite(step_size)) throw std::invalid_argument("guidance_step: step_size must be >= 0");
  if (step_size == 0.0) return image;
  const Image g = model.score_gradient(image, prompt, type);
  if (g.size() != image.size()) throw std::invalid_argument("guidance_step: gradient shape differs from image");
  Image out = image;
  auto& d = out.storage();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const float gi = g.storage()[i];
    if (!std::isfinite(gi)) throw std::runtime_error("guidance_step: non-finite gradient at index " + std::to_string(i));
    d[i] = std::clamp(static_cast<float>(d[i] + step_size * gi), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace rahf
