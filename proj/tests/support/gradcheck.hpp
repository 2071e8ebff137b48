// SPDX-License-Identifier: Apache-2.0
// Finite-difference harness shared by the unit and acceptance suites.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rahf/autodiff.hpp"
#include "rahf/model.hpp"
#include "rahf/tensor.hpp"
#include "rahf/training.hpp"

namespace rahf::testing {

struct PrimitiveCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<ad::Var(std::vector<ad::Var>&)> fn;
};

/// Normal entries pushed at least `margin` away from zero, so ReLU kinks are
/// never crossed by a finite-difference step.
inline Tensor random_tensor(std::vector<int> shape, Rng& rng, float margin = 0.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.storage()) {
    v = static_cast<float>(rng.normal());
    if (margin > 0.0f && std::abs(v) < margin) v = v < 0.0f ? v - margin : v + margin;
  }
  return t;
}

inline std::vector<PrimitiveCase> primitive_cases(Rng& rng) {
  using ad::Var;
  using V = std::vector<Var>;
  std::vector<PrimitiveCase> c;
  auto t = [&](std::vector<int> s, float margin = 0.0f) { return random_tensor(std::move(s), rng, margin); };
  c.push_back({"add", {t({3, 4}), t({3, 4})}, [](V& v) { return ad::add(v[0], v[1]); }});
  c.push_back({"sub", {t({3, 4}), t({3, 4})}, [](V& v) { return ad::sub(v[0], v[1]); }});
  c.push_back({"mul", {t({3, 4}), t({3, 4})}, [](V& v) { return ad::mul(v[0], v[1]); }});
  c.push_back({"scale", {t({3, 4})}, [](V& v) { return ad::scale(v[0], -1.7f); }});
  c.push_back({"add_scalar", {t({3, 4})}, [](V& v) { return ad::add_scalar(v[0], 0.3f); }});
  c.push_back({"square", {t({3, 4})}, [](V& v) { return ad::square(v[0]); }});
  c.push_back({"relu", {t({3, 4}, 0.05f)}, [](V& v) { return ad::relu(v[0]); }});
  c.push_back({"sigmoid", {t({3, 4})}, [](V& v) { return ad::sigmoid(v[0]); }});
  c.push_back({"sum", {t({3, 4})}, [](V& v) { return ad::sum(v[0]); }});
  c.push_back({"mean", {t({3, 4})}, [](V& v) { return ad::mean(v[0]); }});
  c.push_back({"mse", {t({3, 4}), t({3, 4})}, [](V& v) { return ad::mse(v[0], v[1]); }});
  c.push_back({"reshape", {t({3, 4})}, [](V& v) { return ad::reshape(v[0], {2, 6}); }});
  c.push_back({"transpose", {t({3, 5})}, [](V& v) { return ad::transpose(v[0]); }});
  c.push_back({"concat_rows", {t({2, 4}), t({3, 4})}, [](V& v) { return ad::concat_rows(v[0], v[1]); }});
  c.push_back({"slice_rows", {t({5, 4})}, [](V& v) { return ad::slice_rows(v[0], 1, 4); }});
  c.push_back({"patchify", {t({8, 8, 3})}, [](V& v) { return ad::patchify(v[0], 4); }});
  c.push_back({"matmul", {t({3, 4}), t({4, 5})}, [](V& v) { return ad::matmul(v[0], v[1]); }});
  c.push_back({"add_row_bias", {t({3, 4}), t({4})}, [](V& v) { return ad::add_row_bias(v[0], v[1]); }});
  c.push_back({"linear", {t({3, 4}), t({4, 5}), t({5})}, [](V& v) { return ad::linear(v[0], v[1], v[2]); }});
  c.push_back({"softmax_rows", {t({3, 5})}, [](V& v) { return ad::softmax_rows(v[0]); }});
  c.push_back({"layer_norm", {t({4, 6}), t({6}), t({6})}, [](V& v) { return ad::layer_norm(v[0], v[1], v[2]); }});
  c.push_back({"embedding", {t({6, 4})}, [](V& v) {
                 static const std::vector<int> ids = {3, 0, 3, 5};
                 return ad::embedding(v[0], ids);
               }});
  c.push_back({"conv2d_same", {t({3, 6, 6}), t({4, 3, 3, 3}), t({4})},
               [](V& v) { return ad::conv2d(v[0], v[1], v[2], 1, 1); }});
  c.push_back({"conv2d_valid_strided", {t({2, 7, 7}), t({3, 2, 3, 3}), t({3})},
               [](V& v) { return ad::conv2d(v[0], v[1], v[2], 2, 0); }});
  c.push_back({"conv_transpose2d", {t({3, 4, 4}), t({3, 2, 4, 4}), t({2})},
               [](V& v) { return ad::conv_transpose2d(v[0], v[1], v[2], 2, 1, 0); }});
  c.push_back({"conv_transpose2d_outpad", {t({2, 3, 3}), t({2, 3, 3, 3}), t({3})},
               [](V& v) { return ad::conv_transpose2d(v[0], v[1], v[2], 2, 1, 1); }});
  c.push_back({"attention_masked", {t({4, 8}), t({5, 8}), t({5, 8})}, [](V& v) {
                 static const std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1};
                 return ad::attention(v[0], v[1], v[2], 2, valid, false);
               }});
  c.push_back({"attention_causal", {t({5, 8}), t({5, 8}), t({5, 8})},
               [](V& v) { return ad::attention(v[0], v[1], v[2], 2, {}, true); }});
  c.push_back({"cross_entropy", {t({5, 7})}, [](V& v) {
                 static const std::vector<int> targets = {2, 6, 0, 3, 0};
                 return ad::cross_entropy(v[0], targets, 0);
               }});
  return c;
}

/// d(sum(f(x) * P)) / dx for a fixed random projection P against central
/// differences, over every entry of input `which`.
inline ad::FiniteDiffResult check_primitive(const PrimitiveCase& pc, std::size_t which, Rng& rng, float h,
                                            double tol) {
  std::vector<Tensor> inputs = pc.inputs;
  Tensor proj;
  {
    ad::Tape probe(false);
    std::vector<ad::Var> vs;
    for (const auto& x : inputs) vs.push_back(probe.constant(x));
    proj = random_tensor(pc.fn(vs).shape(), rng);
  }
  auto eval = [&] {
    ad::Tape tape(false);
    std::vector<ad::Var> vs;
    for (const auto& x : inputs) vs.push_back(tape.constant(x));
    return static_cast<double>(ad::sum(ad::mul(pc.fn(vs), tape.constant(proj))).value()[0]);
  };
  ad::Tape tape;
  std::vector<ad::Var> vs;
  for (const auto& x : inputs) vs.push_back(tape.variable(x));
  const ad::Var loss = ad::sum(ad::mul(pc.fn(vs), tape.constant(proj)));
  tape.backward(loss);
  const Tensor g = tape.grad(vs[which]);
  std::vector<std::size_t> coords(inputs[which].size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  return ad::finite_diff_check(eval, inputs[which].values(), g.values(), coords, h, tol);
}

/// Training loss of one sample with the image as a differentiable input.
inline ad::Var sample_loss(const RahfModel& model, ParamBinding& p, ad::Var image, const TrainingSample& s,
                           std::optional<Task> task = {}) {
  const bool multi = model.config().variant == Variant::kMultiHead;
  std::vector<int> inputs, targets;
  const bool want_sequence = s.target && (multi || !task);
  if (want_sequence) {
    targets = model.target_ids(*s.target);
    inputs.push_back(Vocabulary::kBos);
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  }
  const GraphOutputs g = model.build(p, image, s.prompt, task, want_sequence ? &inputs : nullptr);
  LossInputs in;
  for (int i = 0; i < 2; ++i) {
    if (g.heatmaps[i] && s.heatmaps[i]) in.heatmaps.emplace_back(*g.heatmaps[i], &*s.heatmaps[i]);
  }
  for (int i = 0; i < 4; ++i) {
    if (g.scores[i] && s.scores[i]) in.scores.emplace_back(*g.scores[i], *s.scores[i]);
  }
  if (g.logits) {
    in.logits = g.logits;
    in.target_ids = targets;
  }
  return compute_loss(p.tape(), in, LossWeights{}).total;
}

struct FullLossCheck {
  ad::FiniteDiffResult params;
  ad::FiniteDiffResult pixels;
};

/// Finite-difference check of the whole training loss against `n_params`
/// sampled parameter entries and `n_pixels` sampled pixels.
inline FullLossCheck check_full_loss(RahfModel& model, TrainingSample sample, std::size_t n_params,
                                     std::size_t n_pixels, Rng& rng, float h, double tol) {
  ad::Tape tape;
  ParamBinding p(tape, model.parameters(), true);
  const ad::Var img = image_to_var(tape, sample.image, true);
  tape.backward(sample_loss(model, p, img, sample));

  auto eval = [&] {
    ad::Tape t(false);
    ParamBinding q(t, model.parameters(), false);
    return static_cast<double>(sample_loss(model, q, image_to_var(t, sample.image, false), sample).value()[0]);
  };

  // Parameter entries are flattened across tensors in name order.
  std::vector<std::pair<std::string, std::size_t>> flat;
  for (const auto& [name, tensor] : model.parameters()) {
    for (std::size_t i = 0; i < tensor.size(); ++i) flat.emplace_back(name, i);
  }
  FullLossCheck out;
  out.params.pass = true;
  std::string worst;
  for (std::size_t k = 0; k < n_params; ++k) {
    const auto& [name, idx] = flat[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(flat.size()) - 1))];
    if (!p.bound().count(name)) continue;
    const Tensor g = tape.grad(p.bound().at(name));
    const std::vector<std::size_t> coord = {idx};
    const auto r = ad::finite_diff_check(eval, model.parameters().at(name).values(), g.values(), coord, h, tol);
    ++out.params.checked;
    if (r.max_rel_error > out.params.max_rel_error) {
      out.params.max_rel_error = r.max_rel_error;
      worst = name + "[" + std::to_string(idx) + "]";
    }
    out.params.pass = out.params.pass && r.pass;
  }
  out.params.message = "worst " + worst;

  const Tensor gi = tape.grad(img);
  std::vector<std::size_t> coords;
  for (std::size_t k = 0; k < n_pixels; ++k) {
    coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(sample.image.size()) - 1)));
  }
  out.pixels = ad::finite_diff_check(eval, sample.image.storage(), gi.values(), coords, h, tol);
  return out;
}

}  // namespace rahf::testing
