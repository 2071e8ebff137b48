// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rahf/autodiff.hpp"
#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/model_config.hpp"
#include "rahf/tensor.hpp"
#include "rahf/vocabulary.hpp"

namespace rahf {

/// Named parameter tensors, iterated in name order.
using ParameterStore = std::map<std::string, Tensor>;

/// Binds parameters of a store onto a tape on first use. With
/// `trainable=false` parameters enter the tape as constants.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParameterStore& store, bool trainable)
      : tape_(tape), store_(store), trainable_(trainable) {}

  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  const std::map<std::string, ad::Var>& bound() const { return bound_; }

 private:
  ad::Tape& tape_;
  const ParameterStore& store_;
  bool trainable_;
  std::map<std::string, ad::Var> bound_;
};

struct RichPrediction {
  std::optional<Heatmap> artifact_heatmap;
  std::optional<Heatmap> misalignment_heatmap;
  std::array<std::optional<float>, 4> scores;  // indexed by ScoreType
  std::optional<std::vector<int>> decoded_tokens;
  std::vector<std::string> decoded_words;
  int encoder_passes = 0;

  /// Number of populated outputs (at most 7).
  int output_count() const;
  const std::optional<Heatmap>& heatmap(HeatmapType t) const {
    return t == HeatmapType::kArtifact ? artifact_heatmap : misalignment_heatmap;
  }
};

/// Fused encoder output for one (image, text) pair.
struct FusedSequence {
  ad::Var tokens;  // [n_image + n_text, hidden]
  int n_image = 0;
  int n_text = 0;
  std::vector<std::uint8_t> key_valid;  // 0 for padded text positions
};

/// Graph outputs for one encoder pass; unset entries were not requested.
struct GraphOutputs {
  std::array<std::optional<ad::Var>, 2> heatmaps;  // [H, W] in (0,1), by HeatmapType
  std::array<std::optional<ad::Var>, 4> scores;    // [1] in (0,1), by ScoreType
  std::optional<ad::Var> logits;                   // [L, vocab]
};

class RahfModel {
 public:
  /// Random init from a seed; config.vocab_size is overwritten by the
  /// vocabulary size.
  RahfModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed);
  RahfModel(ModelConfig config, Vocabulary vocab, ParameterStore params);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Text ids for a prompt, with the task token first when given. Throws
  /// when the result exceeds max_text_len.
  std::vector<int> text_ids(const std::string& prompt, std::optional<Task> task) const;
  /// Decoder target ids: the "_0"-marked prompt words followed by eos.
  std::vector<int> target_ids(const MisalignmentTarget& target) const;

  // ---- graph construction (shared by inference and training) ----------
  /// image [H, W, 3] -> [(H/P)*(W/P), fusion_hidden]
  ad::Var encode_image(ParamBinding& p, ad::Var image) const;
  /// Fusion encoder layers plus the final norm over `tokens`.
  ad::Var fusion_encode(ParamBinding& p, ad::Var tokens, std::span<const std::uint8_t> key_valid) const;
  /// Positions whose id is the pad id are masked from attention.
  FusedSequence fuse(ParamBinding& p, ad::Var image_tokens, std::span<const int> text_ids) const;
  ad::Var heatmap_head(ParamBinding& p, const FusedSequence& fused, const std::string& head) const;
  ad::Var score_head(ParamBinding& p, const FusedSequence& fused, const std::string& head) const;
  /// Teacher-forced decoder logits for `inputs` (bos-prefixed).
  ad::Var decoder_logits(ParamBinding& p, const FusedSequence& fused, std::span<const int> inputs) const;

  /// Builds one encoder pass. Multi-head: every head (task must be empty).
  /// Augmented prompt: the head of `task`, or nothing but the decoder when
  /// no task is given. Logits are produced when `decoder_inputs` is set.
  GraphOutputs build(ParamBinding& p, ad::Var image, const std::string& prompt, std::optional<Task> task,
                     const std::vector<int>* decoder_inputs) const;

  // ---- inference -------------------------------------------------------
  /// Multi-head requires no task and runs one pass. Augmented prompt runs
  /// the single requested task, or all six tasks plus the decoder pass when
  /// no task is given.
  RichPrediction forward(const Image& image, const std::string& prompt, std::optional<Task> task = {}) const;
  Heatmap predict_heatmap(const Image& image, const std::string& prompt, HeatmapType type) const;
  float predict_score(const Image& image, const std::string& prompt, ScoreType type) const;
  /// Greedy decode, at most output_token_len tokens, eos excluded.
  std::vector<int> decode_sequence(const Image& image, const std::string& prompt) const;
  /// d score / d pixels, same layout as the image. Throws on non-finite
  /// entries.
  Image score_input_gradient(const Image& image, const std::string& prompt, ScoreType type) const;

  std::string heatmap_head_name(HeatmapType t) const;
  std::string score_head_name(ScoreType t) const;

 private:
  void init_parameters(std::uint64_t seed);
  void check_image(const Image& image) const;
  std::vector<int> greedy_decode(ParamBinding& p, const FusedSequence& fused) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParameterStore params_;
};

ad::Var image_to_var(ad::Tape& tape, const Image& image, bool requires_grad);
Heatmap heatmap_from_var(ad::Var v);

// ---- checkpoint ----------------------------------------------------------
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "RAHF" | u32 version | u32 len + config text | u32 count |
/// per tensor (sorted by name): u32 len + name, u32 rank, u32 dims..., f32 data.
/// All integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const RahfModel& model);
RahfModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const RahfModel& model);
RahfModel checkpoint_from_bytes(const std::string& bytes);

}  // namespace rahf
