// SPDX-License-Identifier: Apache-2.0
#include "rahf/model_config.hpp"

#include <stdexcept>

#include "rahf/autodiff.hpp"
#include "rahf/vocabulary.hpp"

namespace rahf {

std::string variant_name(Variant v) { return v == Variant::kMultiHead ? "multi_head" : "augmented_prompt"; }

Variant parse_variant(const std::string& s) {
  if (s == "multi_head") return Variant::kMultiHead;
  if (s == "augmented_prompt") return Variant::kAugmentedPrompt;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

namespace {

void check(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument("model config: " + what);
}

void check_stack(const ConvStack& s, const std::string& name) {
  check(s.kernels.size() == s.filters.size() && s.strides.size() == s.filters.size(),
        name + " filter/kernel/stride lists differ in length");
  for (std::size_t i = 0; i < s.size(); ++i) {
    check(s.filters[i] > 0 && s.kernels[i] > 0 && s.strides[i] > 0, name + " entries must be positive");
  }
}

}  // namespace

int score_feature_size(const ModelConfig& c) {
  int s = c.grid();
  for (std::size_t i = 0; i < c.score_conv.size(); ++i) s = ad::conv_out_size(s, c.score_conv.kernels[i], c.score_conv.strides[i], 0);
  return s;
}

int heatmap_output_size(const ModelConfig& c) {
  int s = c.grid();
  for (std::size_t i = 0; i < c.heatmap_conv.size(); ++i) {
    const int k = c.heatmap_conv.kernels[i];
    s = ad::conv_out_size(s, k, c.heatmap_conv.strides[i], (k - 1) / 2);
  }
  for (std::size_t i = 0; i < c.heatmap_deconv.size(); ++i) {
    const int k = c.heatmap_deconv.kernels[i], st = c.heatmap_deconv.strides[i];
    const int pad = (k - 1) / 2;
    s = ad::conv_transpose_out_size(s, k, st, pad, st + 2 * pad - k);
  }
  // Read-out convolutions are stride 1 with same padding.
  return s;
}

void ModelConfig::validate() const {
  check(image_size > 0 && patch_size > 0, "image_size and patch_size must be positive");
  check(image_size % patch_size == 0, "image_size must be divisible by patch_size");
  check(vit_layers >= 0 && fusion_layers >= 0 && decoder_layers >= 0, "layer counts must be non-negative");
  check(vit_hidden > 0 && vit_heads > 0 && vit_hidden % vit_heads == 0, "vit_hidden must be divisible by vit_heads");
  check(fusion_hidden > 0 && fusion_heads > 0 && fusion_hidden % fusion_heads == 0,
        "fusion_hidden must be divisible by fusion_heads");
  check(decoder_heads > 0 && fusion_hidden % decoder_heads == 0, "fusion_hidden must be divisible by decoder_heads");
  check(vit_mlp > 0 && fusion_mlp > 0 && decoder_mlp > 0, "mlp sizes must be positive");
  check(vocab_size > Vocabulary::kReserved, "vocab_size must exceed the reserved ids");
  check(max_text_len > 0 && output_token_len > 0, "text lengths must be positive");
  check(readout_kernel > 0 && readout_kernel % 2 == 1, "readout_kernel must be odd");
  check_stack(score_conv, "score_conv");
  check_stack(heatmap_conv, "heatmap_conv");
  check_stack(heatmap_deconv, "heatmap_deconv");
  check(!heatmap_deconv.filters.empty(), "heatmap head needs at least one deconvolution stage");
  for (int k : heatmap_conv.kernels) check(k % 2 == 1, "heatmap_conv kernels must be odd");
  for (int st : heatmap_conv.strides) check(st == 1, "heatmap_conv strides must be 1");
  int up = 1;
  for (std::size_t i = 0; i < heatmap_deconv.size(); ++i) {
    const int k = heatmap_deconv.kernels[i], st = heatmap_deconv.strides[i];
    const int op = st + 2 * ((k - 1) / 2) - k;
    check(op >= 0 && op < st, "heatmap_deconv kernel/stride pair cannot upsample exactly");
    up *= st;
  }
  check(up == patch_size, "product of heatmap_deconv strides must equal patch_size");
  check(!score_dense.empty() && score_dense.back() == 1, "score_dense must end with 1");
  int s = grid();
  for (std::size_t i = 0; i < score_conv.size(); ++i) {
    check(s >= score_conv.kernels[i], "score_conv shrinks the feature map below its kernel");
    s = (s - score_conv.kernels[i]) / score_conv.strides[i] + 1;
  }
  check(heatmap_output_size(*this) == image_size, "heatmap head does not restore the input resolution");
  check(init_std > 0.0, "init_std must be positive");
}

KvConfig ModelConfig::to_kv() const {
  KvConfig kv;
  kv.set("image_size", image_size);
  kv.set("patch_size", patch_size);
  kv.set("vit_layers", vit_layers);
  kv.set("vit_heads", vit_heads);
  kv.set("vit_hidden", vit_hidden);
  kv.set("vit_mlp", vit_mlp);
  kv.set("fusion_layers", fusion_layers);
  kv.set("fusion_heads", fusion_heads);
  kv.set("fusion_hidden", fusion_hidden);
  kv.set("fusion_mlp", fusion_mlp);
  kv.set("decoder_layers", decoder_layers);
  kv.set("decoder_heads", decoder_heads);
  kv.set("decoder_mlp", decoder_mlp);
  kv.set("vocab_size", vocab_size);
  kv.set("max_text_len", max_text_len);
  kv.set("output_token_len", output_token_len);
  kv.set("variant", variant_name(variant));
  kv.set("score_conv_filters", score_conv.filters);
  kv.set("score_conv_kernels", score_conv.kernels);
  kv.set("score_conv_strides", score_conv.strides);
  kv.set("score_dense", score_dense);
  kv.set("heatmap_conv_filters", heatmap_conv.filters);
  kv.set("heatmap_conv_kernels", heatmap_conv.kernels);
  kv.set("heatmap_conv_strides", heatmap_conv.strides);
  kv.set("heatmap_deconv_filters", heatmap_deconv.filters);
  kv.set("heatmap_deconv_kernels", heatmap_deconv.kernels);
  kv.set("heatmap_deconv_strides", heatmap_deconv.strides);
  kv.set("readout_kernel", readout_kernel);
  kv.set("init_std", init_std);
  kv.set("heatmap_bias_init", heatmap_bias_init);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KvConfig& kv) {
  ModelConfig base = kv.get("preset", "toy") == "full" ? full() : toy();
  ModelConfig c = base;
  c.image_size = kv.get_int("image_size", base.image_size);
  c.patch_size = kv.get_int("patch_size", base.patch_size);
  c.vit_layers = kv.get_int("vit_layers", base.vit_layers);
  c.vit_heads = kv.get_int("vit_heads", base.vit_heads);
  c.vit_hidden = kv.get_int("vit_hidden", base.vit_hidden);
  c.vit_mlp = kv.get_int("vit_mlp", base.vit_mlp);
  c.fusion_layers = kv.get_int("fusion_layers", base.fusion_layers);
  c.fusion_heads = kv.get_int("fusion_heads", base.fusion_heads);
  c.fusion_hidden = kv.get_int("fusion_hidden", base.fusion_hidden);
  c.fusion_mlp = kv.get_int("fusion_mlp", base.fusion_mlp);
  c.decoder_layers = kv.get_int("decoder_layers", base.decoder_layers);
  c.decoder_heads = kv.get_int("decoder_heads", base.decoder_heads);
  c.decoder_mlp = kv.get_int("decoder_mlp", base.decoder_mlp);
  c.vocab_size = kv.get_int("vocab_size", base.vocab_size);
  c.max_text_len = kv.get_int("max_text_len", base.max_text_len);
  c.output_token_len = kv.get_int("output_token_len", base.output_token_len);
  c.variant = parse_variant(kv.get("variant", variant_name(base.variant)));
  c.score_conv.filters = kv.get_int_list("score_conv_filters", base.score_conv.filters);
  c.score_conv.kernels = kv.get_int_list("score_conv_kernels", base.score_conv.kernels);
  c.score_conv.strides = kv.get_int_list("score_conv_strides", base.score_conv.strides);
  c.score_dense = kv.get_int_list("score_dense", base.score_dense);
  c.heatmap_conv.filters = kv.get_int_list("heatmap_conv_filters", base.heatmap_conv.filters);
  c.heatmap_conv.kernels = kv.get_int_list("heatmap_conv_kernels", base.heatmap_conv.kernels);
  c.heatmap_conv.strides = kv.get_int_list("heatmap_conv_strides", base.heatmap_conv.strides);
  c.heatmap_deconv.filters = kv.get_int_list("heatmap_deconv_filters", base.heatmap_deconv.filters);
  c.heatmap_deconv.kernels = kv.get_int_list("heatmap_deconv_kernels", base.heatmap_deconv.kernels);
  c.heatmap_deconv.strides = kv.get_int_list("heatmap_deconv_strides", base.heatmap_deconv.strides);
  c.readout_kernel = kv.get_int("readout_kernel", base.readout_kernel);
  c.init_std = kv.get_double("init_std", base.init_std);
  c.heatmap_bias_init = kv.get_double("heatmap_bias_init", base.heatmap_bias_init);
  return c;
}

ModelConfig ModelConfig::toy(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.score_conv = {{32, 16}, {2, 2}, {1, 1}};
  c.score_dense = {64, 32, 1};
  c.heatmap_conv = {{64, 32}, {3, 3}, {1, 1}};
  c.heatmap_deconv = {{32, 16, 8}, {3, 3, 3}, {2, 2, 2}};
  return c;
}

ModelConfig ModelConfig::full(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.image_size = 224;
  c.patch_size = 16;
  c.vit_layers = 12;
  c.vit_heads = 12;
  c.vit_hidden = 768;
  c.vit_mlp = 3072;
  c.fusion_layers = 12;
  c.fusion_heads = 12;
  c.fusion_hidden = 768;
  c.fusion_mlp = 2048;
  c.decoder_layers = 12;
  c.decoder_heads = 12;
  c.decoder_mlp = 2048;
  c.max_text_len = 64;
  c.output_token_len = 64;
  c.score_conv = {{768, 384, 128, 64}, {2, 2, 2, 2}, {1, 1, 1, 1}};
  c.score_dense = {2048, 1024, 1};
  c.heatmap_conv = {{768, 384}, {3, 3}, {1, 1}};
  c.heatmap_deconv = {{768, 384, 384, 192}, {3, 3, 3, 3}, {2, 2, 2, 2}};
  return c;
}

}  // namespace rahf
