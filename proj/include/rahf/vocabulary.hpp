// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rahf/feedback.hpp"

namespace rahf {

/// Output type selected by a task string in the augmented-prompt variant.
enum class Task {
  kImplausibilityHeatmap = 0,
  kMisalignmentHeatmap,
  kPlausibilityScore,
  kAlignmentScore,
  kAestheticsScore,
  kOverallScore,
};
inline constexpr std::array<Task, 6> kTasks = {Task::kImplausibilityHeatmap, Task::kMisalignmentHeatmap,
                                               Task::kPlausibilityScore,     Task::kAlignmentScore,
                                               Task::kAestheticsScore,       Task::kOverallScore};

/// Verbatim task strings, e.g. "implausibility heatmap".
std::string_view task_string(Task t);
Task parse_task(std::string_view s);
bool is_heatmap_task(Task t);
HeatmapType task_heatmap(Task t);
ScoreType task_score(Task t);
Task heatmap_task(HeatmapType t);
Task score_task(ScoreType t);

/// Word-level vocabulary. Reserved ids: pad, bos, eos, unk, then one token
/// per task string. Every corpus word w also gets the entry w_0.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstTask = 4;
  static constexpr int kReserved = kFirstTask + static_cast<int>(kTasks.size());

  Vocabulary();
  static Vocabulary build(std::span<const std::string> prompts);
  /// Inverse of `to_text`.
  static Vocabulary from_text(std::string_view text);

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int task_id(Task t) const { return kFirstTask + static_cast<int>(t); }

  std::vector<int> encode(std::span<const std::string> words) const;
  /// Words of the given ids; reserved ids are dropped.
  std::vector<std::string> decode(std::span<const int> ids) const;

  /// Space-separated non-reserved words, in id order.
  std::string to_text() const;

 private:
  void add(const std::string& word);
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace rahf
