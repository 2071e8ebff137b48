// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rahf/kv_config.hpp"

namespace rahf {

enum class Variant { kMultiHead, kAugmentedPrompt };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ConvStack {
  std::vector<int> filters;
  std::vector<int> kernels;
  std::vector<int> strides;
  std::size_t size() const { return filters.size(); }
};

/// Architecture hyperparameters. Image tokens are laid out on a
/// (image_size / patch_size)^2 grid; the heatmap head upsamples that grid by
/// the product of its deconvolution strides, which must equal patch_size.
struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;

  int vit_layers = 2;
  int vit_heads = 2;
  int vit_hidden = 64;
  int vit_mlp = 128;

  int fusion_layers = 2;
  int fusion_heads = 2;
  int fusion_hidden = 64;
  int fusion_mlp = 128;

  int decoder_layers = 2;
  int decoder_heads = 2;
  int decoder_mlp = 128;

  int vocab_size = 0;  // filled from the vocabulary
  int max_text_len = 24;
  int output_token_len = 32;
  Variant variant = Variant::kMultiHead;

  ConvStack score_conv;          // kernels applied with no padding
  std::vector<int> score_dense;  // last entry must be 1
  ConvStack heatmap_conv;        // "same" padding
  ConvStack heatmap_deconv;      // each stage multiplies resolution by its stride
  int readout_kernel = 3;

  double init_std = 0.02;
  /// Initial bias of the final heatmap logit. Heatmap targets are mostly
  /// zero, so the head starts from a low prior instead of 0.5.
  double heatmap_bias_init = -4.0;

  int grid() const { return image_size / patch_size; }
  int image_tokens() const { return grid() * grid(); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  KvConfig to_kv() const;
  static ModelConfig from_kv(const KvConfig& kv);

  static ModelConfig toy(Variant v = Variant::kMultiHead);
  /// ViT-B/16 + T5-base sized configuration.
  static ModelConfig full(Variant v = Variant::kMultiHead);
};

/// Spatial size after the score head's valid convolutions.
int score_feature_size(const ModelConfig& c);
/// Heatmap resolution implied by the head geometry.
int heatmap_output_size(const ModelConfig& c);

}  // namespace rahf
