// SPDX-License-Identifier: Apache-2.0
#include "rahf/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace rahf {

double lr_schedule(int step, double base_lr, int warmup_steps) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (warmup_steps <= 0) return base_lr;
  const double s = step, w = warmup_steps;
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig a;
  a.crop_prob = 0.0;
  a.photometric_prob = 0.0;
  a.grayscale_prob = 0.0;
  return a;
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  check(batch_size > 0, "batch_size must be positive");
  check(total_steps >= 0, "total_steps must be non-negative");
  check(base_lr >= 0.0, "base_lr must be non-negative");
  check(warmup_steps >= 0 && warmup_steps <= std::max(total_steps, 1), "warmup_steps must lie in [0, total_steps]");
  check(weight_decay >= 0.0, "weight_decay must be non-negative");
  check(weights.heatmap >= 0.0 && weights.score >= 0.0 && weights.sequence >= 0.0, "loss weights must be >= 0");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas must lie in [0, 1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
  const AugmentConfig& a = augment;
  for (double p : {a.crop_prob, a.photometric_prob, a.grayscale_prob}) {
    check(p >= 0.0 && p <= 1.0, "augmentation probabilities must lie in [0, 1]");
  }
  check(a.crop_min > 0.0 && a.crop_min <= a.crop_max && a.crop_max <= 1.0, "crop range must satisfy 0 < min <= max <= 1");
  check(a.contrast_min <= a.contrast_max && a.saturation_min <= a.saturation_max, "factor ranges must be ordered");
  check(a.jpeg_quality_min >= 1 && a.jpeg_quality_min <= a.jpeg_quality_max && a.jpeg_quality_max <= 100,
        "jpeg quality range must lie in [1, 100]");
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("batch_size", batch_size);
  kv.set("total_steps", total_steps);
  kv.set("base_lr", base_lr);
  kv.set("warmup_steps", warmup_steps);
  kv.set("weight_decay", weight_decay);
  kv.set("adam_beta1", adam_beta1);
  kv.set("adam_beta2", adam_beta2);
  kv.set("adam_eps", adam_eps);
  kv.set("w_heatmap", weights.heatmap);
  kv.set("w_score", weights.score);
  kv.set("w_sequence", weights.sequence);
  kv.set("crop_prob", augment.crop_prob);
  kv.set("crop_min", augment.crop_min);
  kv.set("crop_max", augment.crop_max);
  kv.set("photometric_prob", augment.photometric_prob);
  kv.set("brightness_delta", augment.brightness_delta);
  kv.set("contrast_min", augment.contrast_min);
  kv.set("contrast_max", augment.contrast_max);
  kv.set("hue_delta", augment.hue_delta);
  kv.set("saturation_min", augment.saturation_min);
  kv.set("saturation_max", augment.saturation_max);
  kv.set("jpeg_quality_min", augment.jpeg_quality_min);
  kv.set("jpeg_quality_max", augment.jpeg_quality_max);
  kv.set("grayscale_prob", augment.grayscale_prob);
  kv.set("seed", std::to_string(seed));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  const TrainConfig base = kv.get("preset", "toy") == "full" ? full() : toy();
  TrainConfig c = base;
  c.batch_size = kv.get_int("batch_size", base.batch_size);
  c.total_steps = kv.get_int("total_steps", base.total_steps);
  c.base_lr = kv.get_double("base_lr", base.base_lr);
  c.warmup_steps = kv.get_int("warmup_steps", base.warmup_steps);
  c.weight_decay = kv.get_double("weight_decay", base.weight_decay);
  c.adam_beta1 = kv.get_double("adam_beta1", base.adam_beta1);
  c.adam_beta2 = kv.get_double("adam_beta2", base.adam_beta2);
  c.adam_eps = kv.get_double("adam_eps", base.adam_eps);
  c.weights.heatmap = kv.get_double("w_heatmap", base.weights.heatmap);
  c.weights.score = kv.get_double("w_score", base.weights.score);
  c.weights.sequence = kv.get_double("w_sequence", base.weights.sequence);
  AugmentConfig& a = c.augment;
  a.crop_prob = kv.get_double("crop_prob", a.crop_prob);
  a.crop_min = kv.get_double("crop_min", a.crop_min);
  a.crop_max = kv.get_double("crop_max", a.crop_max);
  a.photometric_prob = kv.get_double("photometric_prob", a.photometric_prob);
  a.brightness_delta = kv.get_double("brightness_delta", a.brightness_delta);
  a.contrast_min = kv.get_double("contrast_min", a.contrast_min);
  a.contrast_max = kv.get_double("contrast_max", a.contrast_max);
  a.hue_delta = kv.get_double("hue_delta", a.hue_delta);
  a.saturation_min = kv.get_double("saturation_min", a.saturation_min);
  a.saturation_max = kv.get_double("saturation_max", a.saturation_max);
  a.jpeg_quality_min = kv.get_int("jpeg_quality_min", a.jpeg_quality_min);
  a.jpeg_quality_max = kv.get_int("jpeg_quality_max", a.jpeg_quality_max);
  a.grayscale_prob = kv.get_double("grayscale_prob", a.grayscale_prob);
  if (kv.has("seed")) c.seed = std::stoull(kv.require("seed"));
  c.validate();
  return c;
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.batch_size = 256;
  c.total_steps = 20000;
  c.base_lr = 0.015;
  c.warmup_steps = 2000;
  c.weight_decay = 0.01;
  c.augment = AugmentConfig{};
  return c;
}

TrainingSample make_training_sample(const ConsolidatedSample& sample, const Image& image, int image_size) {
  if (image.channels() != 3) throw std::invalid_argument("training sample image must have 3 channels");
  TrainingSample out;
  out.image_id = sample.image_id;
  out.prompt = sample.prompt;
  out.image = (image.width() == image_size && image.height() == image_size)
                  ? image
                  : resize_bilinear(image, image_size, image_size);
  for (HeatmapType t : kHeatmapTypes) {
    const Heatmap& h = sample.heatmap(t);
    out.heatmaps[static_cast<int>(t)] =
        (h.width() == image_size && h.height() == image_size) ? h : resize_bilinear(h, image_size, image_size);
  }
  for (ScoreType t : kScoreTypes) out.scores[static_cast<int>(t)] = sample.scores[static_cast<int>(t)];
  out.target = encode_misalignment_target(split_words(sample.prompt), sample.keyword_labels);
  return out;
}

LossValue compute_loss(ad::Tape& tape, const LossInputs& in, const LossWeights& w) {
  LossValue out;
  std::optional<ad::Var> total;
  auto add_term = [&](ad::Var term, double weight) {
    ad::Var t = ad::scale(term, static_cast<float>(weight));
    total = total ? ad::add(*total, t) : t;
  };
  if (!in.heatmaps.empty()) {
    std::optional<ad::Var> acc;
    for (const auto& [pred, target] : in.heatmaps) {
      const std::vector<int> expect{target->height(), target->width()};
      if (pred.shape() != expect) {
        throw std::invalid_argument("compute_loss: heatmap prediction " + shape_string(pred.shape()) +
                                    " vs target " + shape_string(expect));
      }
      ad::Var t = tape.constant(Tensor(expect, std::vector<float>(target->values().begin(), target->values().end())));
      ad::Var m = ad::mse(pred, t);
      acc = acc ? ad::add(*acc, m) : m;
    }
    ad::Var mean = ad::scale(*acc, 1.0f / static_cast<float>(in.heatmaps.size()));
    out.heatmap = mean.value()[0];
    add_term(mean, w.heatmap);
  }
  if (!in.scores.empty()) {
    std::optional<ad::Var> acc;
    for (const auto& [pred, target] : in.scores) {
      if (pred.value().size() != 1) throw std::invalid_argument("compute_loss: score prediction must be a scalar");
      ad::Var d = ad::square(ad::add_scalar(ad::reshape(pred, {1}), -target));
      acc = acc ? ad::add(*acc, d) : d;
    }
    ad::Var mean = ad::scale(*acc, 1.0f / static_cast<float>(in.scores.size()));
    out.score = mean.value()[0];
    add_term(mean, w.score);
  }
  if (in.logits) {
    if (in.logits->shape()[0] != static_cast<int>(in.target_ids.size())) {
      throw std::invalid_argument("compute_loss: logits rows do not match target length");
    }
    ad::Var ce = ad::cross_entropy(*in.logits, in.target_ids, Vocabulary::kPad);
    out.sequence = ce.value()[0];
    add_term(ce, w.sequence);
  }
  out.total = total ? ad::reshape(*total, {1}) : tape.constant(Tensor({1}, 0.0f));
  return out;
}

void AdamW::step(ParameterStore& params, const ParameterStore& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (auto& [name, p] : params) {
    auto g_it = grads.find(name);
    if (g_it == grads.end()) continue;
    const Tensor& g = g_it->second;
    auto [m_it, inserted_m] = m_.try_emplace(name, Tensor::zeros(p.shape()));
    auto [v_it, inserted_v] = v_.try_emplace(name, Tensor::zeros(p.shape()));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + eps_) + weight_decay_ * p[i];
      p[i] = static_cast<float>(p[i] - lr * update);
    }
  }
}

std::string loss_record_json(const LossRecord& r) {
  json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["total"] = r.total;
  j["heatmap"] = r.heatmap;
  j["score"] = r.score;
  j["sequence"] = r.sequence;
  return j.dump();
}

void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write loss history " + path.string());
  for (const auto& r : history) out << loss_record_json(r) << '\n';
}

std::vector<TrainExample> expand_examples(const ModelConfig& config, std::size_t sample_count) {
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < sample_count; ++i) {
    if (config.variant == Variant::kMultiHead) {
      out.push_back({i, std::nullopt});
      continue;
    }
    for (Task t : kTasks) out.push_back({i, t});
    out.push_back({i, std::nullopt});
  }
  return out;
}

LossValue example_loss(const RahfModel& model, ParamBinding& p, const TrainingSample& sample,
                       std::optional<Task> task, const LossWeights& w) {
  ad::Tape& tape = p.tape();
  const bool multi = model.config().variant == Variant::kMultiHead;
  std::vector<int> inputs, targets;
  const bool want_sequence = sample.target && (multi || !task);
  if (want_sequence) {
    targets = model.target_ids(*sample.target);
    inputs.push_back(Vocabulary::kBos);
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  }
  const GraphOutputs g = model.build(p, image_to_var(tape, sample.image, false), sample.prompt,
                                     multi ? std::nullopt : task, want_sequence ? &inputs : nullptr);
  LossInputs in;
  for (HeatmapType t : kHeatmapTypes) {
    const int i = static_cast<int>(t);
    if (g.heatmaps[i] && sample.heatmaps[i]) in.heatmaps.emplace_back(*g.heatmaps[i], &*sample.heatmaps[i]);
  }
  for (ScoreType t : kScoreTypes) {
    const int i = static_cast<int>(t);
    if (g.scores[i] && sample.scores[i]) in.scores.emplace_back(*g.scores[i], *sample.scores[i]);
  }
  if (g.logits) {
    in.logits = g.logits;
    in.target_ids = std::move(targets);
  }
  return compute_loss(tape, in, w);
}

TrainResult train(RahfModel& model, const std::vector<TrainingSample>& data, const TrainConfig& cfg,
                  const ProgressFn& progress) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  const std::vector<TrainExample> examples = expand_examples(model.config(), data.size());
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), examples.size());
  const Rng root(cfg.seed);

  AdamW opt(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
  TrainResult result;
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = examples.size();
  std::uint64_t epoch = 0;

  for (int step = 1; step <= cfg.total_steps; ++step) {
    ParameterStore grads;
    LossRecord rec;
    rec.step = step;
    rec.lr = lr_schedule(step, cfg.base_lr, cfg.warmup_steps);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = root.split({0, epoch});
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        cursor = 0;
        ++epoch;
      }
      const std::size_t ex_index = order[cursor++];
      const TrainExample& ex = examples[ex_index];
      Rng aug_rng = root.split({1, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(ex_index)});
      const TrainingSample sample = augment(data[ex.sample], cfg.augment, aug_rng);

      ad::Tape tape(true);
      ParamBinding p(tape, model.parameters(), true);
      const LossValue loss = example_loss(model, p, sample, ex.task, cfg.weights);
      const double total = loss.total.value()[0];
      if (!std::isfinite(total)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      }
      rec.total += total;
      rec.heatmap += loss.heatmap;
      rec.score += loss.score;
      rec.sequence += loss.sequence;
      if (!tape.requires_grad(loss.total)) continue;
      tape.backward(loss.total);
      for (const auto& [name, var] : p.bound()) {
        if (!tape.requires_grad(var)) continue;
        const Tensor g = tape.grad(var);
        auto [it, inserted] = grads.try_emplace(name, g);
        if (!inserted) {
          float* dst = it->second.data();
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
      }
    }
    const float inv = 1.0f / static_cast<float>(batch);
    for (auto& [_, g] : grads) {
      for (float& v : g.storage()) v *= inv;
    }
    rec.total /= static_cast<double>(batch);
    rec.heatmap /= static_cast<double>(batch);
    rec.score /= static_cast<double>(batch);
    rec.sequence /= static_cast<double>(batch);
    opt.step(model.parameters(), grads, rec.lr);
    result.history.push_back(rec);
    if (progress) progress(rec);
  }
  return result;
}

}  // namespace rahf
