// SPDX-License-Identifier: Apache-2.0
#include "rahf/vocabulary.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace rahf {

std::string_view task_string(Task t) {
  switch (t) {
    case Task::kImplausibilityHeatmap: return "implausibility heatmap";
    case Task::kMisalignmentHeatmap: return "misalignment heatmap";
    case Task::kPlausibilityScore: return "plausibility score";
    case Task::kAlignmentScore: return "alignment score";
    case Task::kAestheticsScore: return "aesthetics score";
    case Task::kOverallScore: return "overall score";
  }
  return "";
}

Task parse_task(std::string_view s) {
  for (Task t : kTasks) {
    if (task_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown task string '" + std::string(s) + "'");
}

bool is_heatmap_task(Task t) { return t == Task::kImplausibilityHeatmap || t == Task::kMisalignmentHeatmap; }

HeatmapType task_heatmap(Task t) {
  if (!is_heatmap_task(t)) throw std::invalid_argument("task is not a heatmap task");
  return t == Task::kImplausibilityHeatmap ? HeatmapType::kArtifact : HeatmapType::kMisalignment;
}

ScoreType task_score(Task t) {
  if (is_heatmap_task(t)) throw std::invalid_argument("task is not a score task");
  return static_cast<ScoreType>(static_cast<int>(t) - static_cast<int>(Task::kPlausibilityScore));
}

Task heatmap_task(HeatmapType t) {
  return t == HeatmapType::kArtifact ? Task::kImplausibilityHeatmap : Task::kMisalignmentHeatmap;
}

Task score_task(ScoreType t) {
  return static_cast<Task>(static_cast<int>(Task::kPlausibilityScore) + static_cast<int>(t));
}

Vocabulary::Vocabulary() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(w);
  for (Task t : kTasks) add("<task:" + std::string(task_string(t)) + ">");
}

void Vocabulary::add(const std::string& word) {
  if (index_.count(word)) return;
  index_.emplace(word, static_cast<int>(words_.size()));
  words_.push_back(word);
}

Vocabulary Vocabulary::build(std::span<const std::string> prompts) {
  std::set<std::string> words;
  for (const auto& p : prompts) {
    for (auto& w : split_words(p)) words.insert(std::move(w));
  }
  Vocabulary v;
  for (const auto& w : words) {
    v.add(w);
    v.add(w + std::string(kMisalignedSuffix));
  }
  return v;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  Vocabulary v;
  for (const auto& w : split_words(text)) v.add(w);
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id >= kReserved && id < size()) out.push_back(words_[static_cast<std::size_t>(id)]);
  }
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (std::size_t i = kReserved; i < words_.size(); ++i) {
    if (i > static_cast<std::size_t>(kReserved)) out += ' ';
    out += words_[i];
  }
  return out;
}

}  // namespace rahf
