// SPDX-License-Identifier: Apache-2.0
#include "rahf/evaluation.hpp"

#include <map>

namespace rahf {

ConsolidatedSample predict_sample(const RahfModel& model, const std::string& image_id, const Image& image,
                                  const std::string& prompt, std::optional<Task> task,
                                  std::vector<std::string>* decoded_words) {
  const int size = model.config().image_size;
  const Image input =
      image.width() == size && image.height() == size ? image : resize_bilinear(image, size, size);
  const RichPrediction pred = model.forward(input, prompt, task);

  ConsolidatedSample s;
  s.image_id = image_id;
  s.prompt = prompt;
  auto place = [&](const std::optional<Heatmap>& h) {
    if (!h) return Heatmap(image.width(), image.height());
    if (h->width() == image.width() && h->height() == image.height()) return *h;
    return resize_bilinear(*h, image.width(), image.height());
  };
  s.artifact_heatmap = place(pred.artifact_heatmap);
  s.misalignment_heatmap = place(pred.misalignment_heatmap);
  for (ScoreType t : kScoreTypes) s.scores[static_cast<int>(t)] = pred.scores[static_cast<int>(t)].value_or(0.0f);
  const auto words = split_words(prompt);
  s.keyword_labels = decode_misalignment(pred.decoded_words, words).labels;
  if (decoded_words) *decoded_words = pred.decoded_words;
  return s;
}

metrics::EvalReport evaluate_predictions(std::span<const ConsolidatedSample> pred,
                                         std::span<const ConsolidatedSample> gt) {
  std::map<std::string, const ConsolidatedSample*> by_id;
  for (const auto& g : gt) by_id.emplace(g.image_id, &g);

  metrics::EvalReport report;
  std::vector<std::array<float, 4>> ps, gs;
  std::vector<metrics::HeatmapEvalInput> art, mis;
  std::vector<metrics::LabelPair> labels;
  for (const auto& p : pred) {
    auto it = by_id.find(p.image_id);
    if (it == by_id.end()) continue;
    const ConsolidatedSample& g = *it->second;
    ++report.matched_samples;
    ps.push_back(p.scores);
    gs.push_back(g.scores);
    auto fit = [&](const Heatmap& h, const Heatmap& ref) {
      return h.same_dims(ref) ? h : resize_bilinear(h, ref.width(), ref.height());
    };
    art.push_back({fit(p.artifact_heatmap, g.artifact_heatmap), g.artifact_heatmap, g.artifact_points});
    mis.push_back({fit(p.misalignment_heatmap, g.misalignment_heatmap), g.misalignment_heatmap, g.misalignment_points});
    if (p.keyword_labels.size() == g.keyword_labels.size()) labels.push_back({p.keyword_labels, g.keyword_labels});
  }
  report.scores = metrics::evaluate_scores(ps, gs);
  report.artifact = metrics::evaluate_heatmaps(art);
  report.misalignment = metrics::evaluate_heatmaps(mis);
  report.keywords = metrics::token_prf(labels);
  return report;
}

}  // namespace rahf
