// SPDX-License-Identifier: Apache-2.0
#include "rahf/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rahf {

using ad::Var;

ad::Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto src = store_.find(name);
  if (src == store_.end()) throw std::out_of_range("model: missing parameter '" + name + "'");
  Var v = trainable_ ? tape_.variable(src->second) : tape_.constant(src->second);
  bound_.emplace(name, v);
  return v;
}

int RichPrediction::output_count() const {
  int n = (artifact_heatmap ? 1 : 0) + (misalignment_heatmap ? 1 : 0) + (decoded_tokens ? 1 : 0);
  for (const auto& s : scores) n += s ? 1 : 0;
  return n;
}

namespace {

/// Parameter declarations collected before initialization.
class ParamSpec {
 public:
  enum class Init { kNormal, kZero, kOne, kConstant };

  void add(const std::string& name, std::vector<int> shape, Init init, float value = 0.0f) {
    entries_.push_back({name, std::move(shape), init, value});
  }
  void linear(const std::string& name, int in, int out) {
    add(name + ".w", {in, out}, Init::kNormal);
    add(name + ".b", {out}, Init::kZero);
  }
  void norm(const std::string& name, int dim) {
    add(name + ".g", {dim}, Init::kOne);
    add(name + ".b", {dim}, Init::kZero);
  }
  void conv(const std::string& name, int out, int in, int k) {
    add(name + ".w", {out, in, k, k}, Init::kNormal);
    add(name + ".b", {out}, Init::kZero);
  }
  void deconv(const std::string& name, int in, int out, int k) {
    add(name + ".w", {in, out, k, k}, Init::kNormal);
    add(name + ".b", {out}, Init::kZero);
  }
  void attention(const std::string& name, int dim) {
    for (const char* p : {".q", ".k", ".v", ".o"}) linear(name + p, dim, dim);
  }
  void mlp(const std::string& name, int dim, int hidden) {
    linear(name + ".fc1", dim, hidden);
    linear(name + ".fc2", hidden, dim);
  }

  struct Entry {
    std::string name;
    std::vector<int> shape;
    Init init;
    float value;  // kConstant only
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

void encoder_spec(ParamSpec& s, const std::string& prefix, int layers, int dim, int mlp) {
  for (int i = 0; i < layers; ++i) {
    const std::string l = prefix + ".layer" + std::to_string(i);
    s.norm(l + ".ln1", dim);
    s.attention(l + ".attn", dim);
    s.norm(l + ".ln2", dim);
    s.mlp(l + ".mlp", dim, mlp);
  }
}

void heatmap_head_spec(ParamSpec& s, const ModelConfig& c, const std::string& name) {
  int ch = c.fusion_hidden;
  for (std::size_t i = 0; i < c.heatmap_conv.size(); ++i) {
    const std::string l = name + ".conv" + std::to_string(i);
    s.conv(l, c.heatmap_conv.filters[i], ch, c.heatmap_conv.kernels[i]);
    s.norm(l + ".ln", c.heatmap_conv.filters[i]);
    ch = c.heatmap_conv.filters[i];
  }
  for (std::size_t i = 0; i < c.heatmap_deconv.size(); ++i) {
    const std::string l = name + ".deconv" + std::to_string(i);
    s.deconv(l, ch, c.heatmap_deconv.filters[i], c.heatmap_deconv.kernels[i]);
    s.norm(l + ".ln", c.heatmap_deconv.filters[i]);
    ch = c.heatmap_deconv.filters[i];
  }
  s.conv(name + ".readout0", ch, ch, c.readout_kernel);
  s.norm(name + ".readout0.ln", ch);
  s.add(name + ".readout1.w", {1, ch, c.readout_kernel, c.readout_kernel}, ParamSpec::Init::kNormal);
  s.add(name + ".readout1.b", {1}, ParamSpec::Init::kConstant, static_cast<float>(c.heatmap_bias_init));
}

void score_head_spec(ParamSpec& s, const ModelConfig& c, const std::string& name) {
  int ch = c.fusion_hidden;
  for (std::size_t i = 0; i < c.score_conv.size(); ++i) {
    const std::string l = name + ".conv" + std::to_string(i);
    s.conv(l, c.score_conv.filters[i], ch, c.score_conv.kernels[i]);
    s.norm(l + ".ln", c.score_conv.filters[i]);
    ch = c.score_conv.filters[i];
  }
  const int side = score_feature_size(c);
  int in = ch * side * side;
  for (std::size_t i = 0; i < c.score_dense.size(); ++i) {
    s.linear(name + ".dense" + std::to_string(i), in, c.score_dense[i]);
    in = c.score_dense[i];
  }
}

Var layer_norm_named(ParamBinding& p, Var x, const std::string& name) {
  return ad::layer_norm(x, p(name + ".g"), p(name + ".b"));
}

Var linear_named(ParamBinding& p, Var x, const std::string& name) {
  return ad::linear(x, p(name + ".w"), p(name + ".b"));
}

/// Layer norm over the channel axis of a [C, H, W] map.
Var channel_norm(ParamBinding& p, Var x, const std::string& name) {
  const auto shape = x.shape();
  Var rows = ad::transpose(ad::reshape(x, {shape[0], shape[1] * shape[2]}));
  Var normed = layer_norm_named(p, rows, name);
  return ad::reshape(ad::transpose(normed), shape);
}

Var self_attention_block(ParamBinding& p, Var x, const std::string& name, int heads,
                         std::span<const std::uint8_t> key_valid, bool causal) {
  Var q = linear_named(p, x, name + ".q");
  Var k = linear_named(p, x, name + ".k");
  Var v = linear_named(p, x, name + ".v");
  return linear_named(p, ad::attention(q, k, v, heads, key_valid, causal), name + ".o");
}

Var mlp_block(ParamBinding& p, Var x, const std::string& name) {
  return linear_named(p, ad::relu(linear_named(p, x, name + ".fc1")), name + ".fc2");
}

/// Pre-norm transformer encoder layers.
Var encoder_stack(ParamBinding& p, Var x, const std::string& prefix, int layers, int heads,
                  std::span<const std::uint8_t> key_valid) {
  for (int i = 0; i < layers; ++i) {
    const std::string l = prefix + ".layer" + std::to_string(i);
    x = ad::add(x, self_attention_block(p, layer_norm_named(p, x, l + ".ln1"), l + ".attn", heads, key_valid, false));
    x = ad::add(x, mlp_block(p, layer_norm_named(p, x, l + ".ln2"), l + ".mlp"));
  }
  return x;
}

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

std::string heatmap_head_name_for(const ModelConfig& c, HeatmapType t) {
  if (c.variant == Variant::kAugmentedPrompt) return "heatmap";
  return "heatmap_" + std::string(heatmap_name(t));
}

std::string score_head_name_for(const ModelConfig& c, ScoreType t) {
  if (c.variant == Variant::kAugmentedPrompt) return "score";
  return "score_" + std::string(score_name(t));
}

ParamSpec declare_parameters(const ModelConfig& c) {
  ParamSpec s;
  s.linear("vit.patch", c.patch_size * c.patch_size * 3, c.vit_hidden);
  s.add("vit.pos_row", {c.grid(), c.vit_hidden}, ParamSpec::Init::kNormal);
  s.add("vit.pos_col", {c.grid(), c.vit_hidden}, ParamSpec::Init::kNormal);
  encoder_spec(s, "vit", c.vit_layers, c.vit_hidden, c.vit_mlp);
  if (c.vit_hidden != c.fusion_hidden) s.linear("vit.proj", c.vit_hidden, c.fusion_hidden);

  s.add("text.embed", {c.vocab_size, c.fusion_hidden}, ParamSpec::Init::kNormal);
  s.add("text.pos", {c.max_text_len, c.fusion_hidden}, ParamSpec::Init::kNormal);
  encoder_spec(s, "fusion", c.fusion_layers, c.fusion_hidden, c.fusion_mlp);
  s.norm("fusion.ln_final", c.fusion_hidden);

  if (c.variant == Variant::kMultiHead) {
    for (HeatmapType t : kHeatmapTypes) heatmap_head_spec(s, c, heatmap_head_name_for(c, t));
    for (ScoreType t : kScoreTypes) score_head_spec(s, c, score_head_name_for(c, t));
  } else {
    heatmap_head_spec(s, c, "heatmap");
    score_head_spec(s, c, "score");
  }

  s.add("dec.embed", {c.vocab_size, c.fusion_hidden}, ParamSpec::Init::kNormal);
  s.add("dec.pos", {c.output_token_len + 1, c.fusion_hidden}, ParamSpec::Init::kNormal);
  for (int i = 0; i < c.decoder_layers; ++i) {
    const std::string l = "dec.layer" + std::to_string(i);
    s.norm(l + ".ln1", c.fusion_hidden);
    s.attention(l + ".self", c.fusion_hidden);
    s.norm(l + ".ln2", c.fusion_hidden);
    s.attention(l + ".cross", c.fusion_hidden);
    s.norm(l + ".ln3", c.fusion_hidden);
    s.mlp(l + ".mlp", c.fusion_hidden, c.decoder_mlp);
  }
  s.norm("dec.ln_final", c.fusion_hidden);
  s.linear("dec.out", c.fusion_hidden, c.vocab_size);

  return s;
}

}  // namespace

RahfModel::RahfModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.vocab_size = vocab_.size();
  config_.validate();
  init_parameters(seed);
}

RahfModel::RahfModel(ModelConfig config, Vocabulary vocab, ParameterStore params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  if (config_.vocab_size != vocab_.size()) throw std::invalid_argument("model: vocab_size does not match vocabulary");
  config_.validate();
  const ParamSpec spec = declare_parameters(config_);
  for (const auto& e : spec.entries()) {
    auto it = params_.find(e.name);
    if (it == params_.end()) throw std::invalid_argument("model: missing parameter '" + e.name + "'");
    if (it->second.shape() != e.shape) {
      throw std::invalid_argument("model: parameter '" + e.name + "' has shape " + shape_string(it->second.shape()) +
                                  ", expected " + shape_string(e.shape));
    }
  }
  if (params_.size() != spec.entries().size()) throw std::invalid_argument("model: unexpected extra parameters");
}

std::string RahfModel::heatmap_head_name(HeatmapType t) const { return heatmap_head_name_for(config_, t); }

std::string RahfModel::score_head_name(ScoreType t) const { return score_head_name_for(config_, t); }

void RahfModel::init_parameters(std::uint64_t seed) {
  const ModelConfig& c = config_;
  const ParamSpec s = declare_parameters(c);
  params_.clear();
  const Rng root(seed);
  std::uint64_t index = 0;
  for (const auto& e : s.entries()) {
    Tensor t(e.shape);
    if (e.init == ParamSpec::Init::kOne || e.init == ParamSpec::Init::kConstant) {
      std::fill(t.storage().begin(), t.storage().end(), e.init == ParamSpec::Init::kOne ? 1.0f : e.value);
    } else if (e.init == ParamSpec::Init::kNormal) {
      Rng r = root.split(index);
      for (float& v : t.storage()) v = static_cast<float>(r.truncated_normal(c.init_std));
    }
    ++index;
    if (!params_.emplace(e.name, std::move(t)).second) throw std::logic_error("duplicate parameter " + e.name);
  }
}

std::size_t RahfModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

std::vector<int> RahfModel::text_ids(const std::string& prompt, std::optional<Task> task) const {
  std::vector<int> ids;
  if (task) ids.push_back(vocab_.task_id(*task));
  for (const auto& w : split_words(prompt)) ids.push_back(vocab_.id(w));
  if (static_cast<int>(ids.size()) > config_.max_text_len) {
    throw std::invalid_argument("model: text has " + std::to_string(ids.size()) + " tokens, max_text_len is " +
                                std::to_string(config_.max_text_len));
  }
  return ids;
}

std::vector<int> RahfModel::target_ids(const MisalignmentTarget& target) const {
  if (static_cast<int>(target.words.size()) > config_.output_token_len) {
    throw std::invalid_argument("model: target has " + std::to_string(target.words.size()) +
                                " words, output_token_len is " + std::to_string(config_.output_token_len));
  }
  std::vector<int> ids = vocab_.encode(target.words);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

void RahfModel::check_image(const Image& image) const {
  if (image.channels() != 3 || image.width() != config_.image_size || image.height() != config_.image_size) {
    throw std::invalid_argument("model: expected a " + std::to_string(config_.image_size) + "x" +
                                std::to_string(config_.image_size) + "x3 image, got " + std::to_string(image.width()) +
                                "x" + std::to_string(image.height()) + "x" + std::to_string(image.channels()));
  }
}

ad::Var RahfModel::encode_image(ParamBinding& p, ad::Var image) const {
  const ModelConfig& c = config_;
  const std::vector<int> expect{c.image_size, c.image_size, 3};
  if (image.shape() != expect) {
    throw std::invalid_argument("model: image tensor has shape " + shape_string(image.shape()) + ", expected " +
                                shape_string(expect));
  }
  const int g = c.grid();
  Var x = linear_named(p, ad::patchify(image, c.patch_size), "vit.patch");

  // Separable 2-D position embedding: token (r, c) gets row[r] + col[c].
  std::vector<int> rows, cols;
  rows.reserve(static_cast<std::size_t>(g * g));
  cols.reserve(static_cast<std::size_t>(g * g));
  for (int r = 0; r < g; ++r) {
    for (int col = 0; col < g; ++col) {
      rows.push_back(r);
      cols.push_back(col);
    }
  }
  x = ad::add(x, ad::add(ad::embedding(p("vit.pos_row"), rows), ad::embedding(p("vit.pos_col"), cols)));
  x = encoder_stack(p, x, "vit", c.vit_layers, c.vit_heads, {});
  if (c.vit_hidden != c.fusion_hidden) x = linear_named(p, x, "vit.proj");
  return x;
}

ad::Var RahfModel::fusion_encode(ParamBinding& p, ad::Var tokens, std::span<const std::uint8_t> key_valid) const {
  Var x = encoder_stack(p, tokens, "fusion", config_.fusion_layers, config_.fusion_heads, key_valid);
  return layer_norm_named(p, x, "fusion.ln_final");
}

FusedSequence RahfModel::fuse(ParamBinding& p, ad::Var image_tokens, std::span<const int> text_ids) const {
  const ModelConfig& c = config_;
  if (static_cast<int>(text_ids.size()) > c.max_text_len) {
    throw std::invalid_argument("model: text has " + std::to_string(text_ids.size()) + " tokens, max_text_len is " +
                                std::to_string(c.max_text_len));
  }
  FusedSequence out;
  out.n_image = image_tokens.shape()[0];
  out.n_text = c.max_text_len;
  std::vector<int> padded(text_ids.begin(), text_ids.end());
  padded.resize(static_cast<std::size_t>(c.max_text_len), Vocabulary::kPad);

  Var text = ad::add(ad::embedding(p("text.embed"), padded), ad::embedding(p("text.pos"), iota_ids(c.max_text_len)));
  out.key_valid.assign(static_cast<std::size_t>(out.n_image), 1);
  for (int id : padded) out.key_valid.push_back(id != Vocabulary::kPad ? 1 : 0);
  out.tokens = fusion_encode(p, ad::concat_rows(image_tokens, text), out.key_valid);
  return out;
}

ad::Var RahfModel::heatmap_head(ParamBinding& p, const FusedSequence& fused, const std::string& head) const {
  const ModelConfig& c = config_;
  const int g = c.grid();
  Var x = ad::slice_rows(fused.tokens, 0, fused.n_image);
  x = ad::reshape(ad::transpose(x), {c.fusion_hidden, g, g});
  for (std::size_t i = 0; i < c.heatmap_conv.size(); ++i) {
    const std::string l = head + ".conv" + std::to_string(i);
    const int k = c.heatmap_conv.kernels[i];
    x = ad::conv2d(x, p(l + ".w"), p(l + ".b"), 1, (k - 1) / 2);
    x = ad::relu(channel_norm(p, x, l + ".ln"));
  }
  for (std::size_t i = 0; i < c.heatmap_deconv.size(); ++i) {
    const std::string l = head + ".deconv" + std::to_string(i);
    const int k = c.heatmap_deconv.kernels[i], s = c.heatmap_deconv.strides[i];
    const int pad = (k - 1) / 2;
    x = ad::conv_transpose2d(x, p(l + ".w"), p(l + ".b"), s, pad, s + 2 * pad - k);
    x = ad::relu(channel_norm(p, x, l + ".ln"));
  }
  const int rp = (c.readout_kernel - 1) / 2;
  x = ad::conv2d(x, p(head + ".readout0.w"), p(head + ".readout0.b"), 1, rp);
  x = ad::relu(channel_norm(p, x, head + ".readout0.ln"));
  x = ad::conv2d(x, p(head + ".readout1.w"), p(head + ".readout1.b"), 1, rp);
  return ad::sigmoid(ad::reshape(x, {c.image_size, c.image_size}));
}

ad::Var RahfModel::score_head(ParamBinding& p, const FusedSequence& fused, const std::string& head) const {
  const ModelConfig& c = config_;
  const int g = c.grid();
  Var x = ad::slice_rows(fused.tokens, 0, fused.n_image);
  x = ad::reshape(ad::transpose(x), {c.fusion_hidden, g, g});
  for (std::size_t i = 0; i < c.score_conv.size(); ++i) {
    const std::string l = head + ".conv" + std::to_string(i);
    x = ad::conv2d(x, p(l + ".w"), p(l + ".b"), c.score_conv.strides[i], 0);
    x = ad::relu(channel_norm(p, x, l + ".ln"));
  }
  x = ad::reshape(x, {1, static_cast<int>(shape_numel(x.shape()))});
  for (std::size_t i = 0; i < c.score_dense.size(); ++i) {
    x = linear_named(p, x, head + ".dense" + std::to_string(i));
    if (i + 1 < c.score_dense.size()) x = ad::relu(x);
  }
  return ad::sigmoid(ad::reshape(x, {1}));
}

ad::Var RahfModel::decoder_logits(ParamBinding& p, const FusedSequence& fused, std::span<const int> inputs) const {
  const ModelConfig& c = config_;
  const int n = static_cast<int>(inputs.size());
  if (n == 0 || n > c.output_token_len + 1) {
    throw std::invalid_argument("model: decoder input length " + std::to_string(n) + " outside [1, " +
                                std::to_string(c.output_token_len + 1) + "]");
  }
  Var x = ad::add(ad::embedding(p("dec.embed"), inputs), ad::embedding(p("dec.pos"), iota_ids(n)));
  for (int i = 0; i < c.decoder_layers; ++i) {
    const std::string l = "dec.layer" + std::to_string(i);
    x = ad::add(x, self_attention_block(p, layer_norm_named(p, x, l + ".ln1"), l + ".self", c.decoder_heads, {}, true));
    Var h = layer_norm_named(p, x, l + ".ln2");
    Var q = linear_named(p, h, l + ".cross.q");
    Var k = linear_named(p, fused.tokens, l + ".cross.k");
    Var v = linear_named(p, fused.tokens, l + ".cross.v");
    x = ad::add(x, linear_named(p, ad::attention(q, k, v, c.decoder_heads, fused.key_valid, false), l + ".cross.o"));
    x = ad::add(x, mlp_block(p, layer_norm_named(p, x, l + ".ln3"), l + ".mlp"));
  }
  return linear_named(p, layer_norm_named(p, x, "dec.ln_final"), "dec.out");
}

GraphOutputs RahfModel::build(ParamBinding& p, ad::Var image, const std::string& prompt, std::optional<Task> task,
                              const std::vector<int>* decoder_inputs) const {
  GraphOutputs out;
  if (config_.variant == Variant::kMultiHead) {
    if (task) throw std::invalid_argument("model: the multi_head variant takes no task string");
    const auto ids = text_ids(prompt, std::nullopt);
    const FusedSequence fused = fuse(p, encode_image(p, image), ids);
    for (HeatmapType t : kHeatmapTypes) {
      out.heatmaps[static_cast<int>(t)] = heatmap_head(p, fused, heatmap_head_name(t));
    }
    for (ScoreType t : kScoreTypes) out.scores[static_cast<int>(t)] = score_head(p, fused, score_head_name(t));
    if (decoder_inputs) out.logits = decoder_logits(p, fused, *decoder_inputs);
    return out;
  }
  const auto ids = text_ids(prompt, task);
  const FusedSequence fused = fuse(p, encode_image(p, image), ids);
  if (task) {
    if (is_heatmap_task(*task)) {
      out.heatmaps[static_cast<int>(task_heatmap(*task))] = heatmap_head(p, fused, "heatmap");
    } else {
      out.scores[static_cast<int>(task_score(*task))] = score_head(p, fused, "score");
    }
  }
  if (decoder_inputs) out.logits = decoder_logits(p, fused, *decoder_inputs);
  return out;
}

ad::Var image_to_var(ad::Tape& tape, const Image& image, bool requires_grad) {
  Tensor t({image.height(), image.width(), image.channels()}, image.storage());
  return requires_grad ? tape.variable(std::move(t)) : tape.constant(std::move(t));
}

Heatmap heatmap_from_var(ad::Var v) {
  const Tensor& t = v.value();
  if (t.rank() != 2) throw std::invalid_argument("heatmap tensor must be rank 2");
  return Heatmap(t.dim(1), t.dim(0), t.storage());
}

std::vector<int> RahfModel::greedy_decode(ParamBinding& p, const FusedSequence& fused) const {
  std::vector<int> inputs{Vocabulary::kBos};
  std::vector<int> out;
  while (static_cast<int>(out.size()) < config_.output_token_len) {
    const Tensor& logits = decoder_logits(p, fused, inputs).value();
    const int v = logits.cols();
    const float* last = logits.data() + static_cast<std::size_t>(logits.rows() - 1) * v;
    const int next = static_cast<int>(std::max_element(last, last + v) - last);
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    inputs.push_back(next);
  }
  return out;
}

RichPrediction RahfModel::forward(const Image& image, const std::string& prompt, std::optional<Task> task) const {
  check_image(image);
  RichPrediction pred;
  auto collect = [&](const GraphOutputs& g) {
    for (HeatmapType t : kHeatmapTypes) {
      if (g.heatmaps[static_cast<int>(t)]) {
        (t == HeatmapType::kArtifact ? pred.artifact_heatmap : pred.misalignment_heatmap) =
            heatmap_from_var(*g.heatmaps[static_cast<int>(t)]);
      }
    }
    for (ScoreType t : kScoreTypes) {
      if (g.scores[static_cast<int>(t)]) pred.scores[static_cast<int>(t)] = g.scores[static_cast<int>(t)]->value()[0];
    }
    ++pred.encoder_passes;
  };
  auto set_tokens = [&](std::vector<int> tokens) {
    pred.decoded_words = vocab_.decode(tokens);
    pred.decoded_tokens = std::move(tokens);
  };

  if (config_.variant == Variant::kMultiHead) {
    if (task) throw std::invalid_argument("model: the multi_head variant takes no task string");
    ad::Tape tape(false);
    ParamBinding p(tape, params_, false);
    const auto ids = text_ids(prompt, std::nullopt);
    const FusedSequence fused = fuse(p, encode_image(p, image_to_var(tape, image, false)), ids);
    GraphOutputs g;
    for (HeatmapType t : kHeatmapTypes) g.heatmaps[static_cast<int>(t)] = heatmap_head(p, fused, heatmap_head_name(t));
    for (ScoreType t : kScoreTypes) g.scores[static_cast<int>(t)] = score_head(p, fused, score_head_name(t));
    collect(g);
    set_tokens(greedy_decode(p, fused));
    return pred;
  }

  auto task_pass = [&](Task t) {
    ad::Tape tape(false);
    ParamBinding p(tape, params_, false);
    collect(build(p, image_to_var(tape, image, false), prompt, t, nullptr));
  };
  if (task) {
    task_pass(*task);
    return pred;
  }
  for (Task t : kTasks) task_pass(t);
  ad::Tape tape(false);
  ParamBinding p(tape, params_, false);
  const FusedSequence fused = fuse(p, encode_image(p, image_to_var(tape, image, false)), text_ids(prompt, std::nullopt));
  set_tokens(greedy_decode(p, fused));
  ++pred.encoder_passes;
  return pred;
}

Heatmap RahfModel::predict_heatmap(const Image& image, const std::string& prompt, HeatmapType type) const {
  check_image(image);
  ad::Tape tape(false);
  ParamBinding p(tape, params_, false);
  const bool aug = config_.variant == Variant::kAugmentedPrompt;
  const auto ids = text_ids(prompt, aug ? std::optional<Task>(heatmap_task(type)) : std::nullopt);
  const FusedSequence fused = fuse(p, encode_image(p, image_to_var(tape, image, false)), ids);
  return heatmap_from_var(heatmap_head(p, fused, heatmap_head_name(type)));
}

namespace {

Var score_graph(const RahfModel& m, ParamBinding& p, Var image, const std::string& prompt, ScoreType type) {
  const bool aug = m.config().variant == Variant::kAugmentedPrompt;
  const auto ids = m.text_ids(prompt, aug ? std::optional<Task>(score_task(type)) : std::nullopt);
  const FusedSequence fused = m.fuse(p, m.encode_image(p, image), ids);
  return m.score_head(p, fused, m.score_head_name(type));
}

}  // namespace

float RahfModel::predict_score(const Image& image, const std::string& prompt, ScoreType type) const {
  check_image(image);
  ad::Tape tape(false);
  ParamBinding p(tape, params_, false);
  return score_graph(*this, p, image_to_var(tape, image, false), prompt, type).value()[0];
}

std::vector<int> RahfModel::decode_sequence(const Image& image, const std::string& prompt) const {
  check_image(image);
  ad::Tape tape(false);
  ParamBinding p(tape, params_, false);
  const FusedSequence fused = fuse(p, encode_image(p, image_to_var(tape, image, false)), text_ids(prompt, std::nullopt));
  return greedy_decode(p, fused);
}

Image RahfModel::score_input_gradient(const Image& image, const std::string& prompt, ScoreType type) const {
  check_image(image);
  ad::Tape tape(true);
  ParamBinding p(tape, params_, false);
  Var x = image_to_var(tape, image, true);
  Var s = score_graph(*this, p, x, prompt, type);
  tape.backward(s);
  const Tensor g = tape.grad(x);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      const std::size_t pix = i / 3;
      throw std::runtime_error("score gradient is non-finite at pixel (" + std::to_string(pix % image.width()) + ", " +
                               std::to_string(pix / image.width()) + ") channel " + std::to_string(i % 3));
    }
  }
  return Image(image.width(), image.height(), 3, g.storage());
}

}  // namespace rahf
