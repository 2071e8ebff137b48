// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rahf/tensor.hpp"

/// Reverse-mode differentiation over a linear tape. Every op appends one node;
/// `Tape::backward` walks the nodes in reverse insertion order, which is a
/// valid reverse topological order because parents always precede children.
namespace rahf::ad {

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<int>& shape() const;
};

class Tape {
 public:
  /// Receives the output gradient and the output value.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad, const Tensor& out_value)>;

  /// With `record=false` no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient accumulated by the last backward pass; zeros when the node
  /// received none.
  Tensor grad(Var v) const;

  /// Seeds d(out)/d(out) = 1 for a single-element node and propagates.
  void backward(Var out);

  bool recording() const { return record_; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op implementation interface.
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  /// Accumulates into the gradient of `v` (no-op for constants).
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer of `v`, zero-initialized on first access.
  /// Only valid for nodes that require grad.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// ---- elementwise -------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var add_scalar(Var a, float s);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);

// ---- reductions --------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
/// Mean of squared differences; shapes must match.
Var mse(Var a, Var b);

// ---- shape -------------------------------------------------------------
Var reshape(Var a, std::vector<int> shape);
/// [R, C] -> [C, R]; higher-rank inputs are viewed as 2-D (rows x last dim).
Var transpose(Var a);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, int begin, int end);
/// [H, W, C] image -> [(H/P)*(W/P), P*P*C] patch rows, raster order.
Var patchify(Var image, int patch);

// ---- linear algebra ----------------------------------------------------
/// [M, K] x [K, N] -> [M, N]
Var matmul(Var a, Var b);
/// x [N, D] + bias [D] broadcast over rows.
Var add_row_bias(Var x, Var bias);
/// x [N, in] * w [in, out] + b [out]
Var linear(Var x, Var w, Var b);

// ---- normalization / activation ---------------------------------------
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Per-row normalization over the last dim with learned scale/shift.
Var layer_norm(Var x, Var gamma, Var beta, float eps = 1e-6f);

// ---- lookup ------------------------------------------------------------
/// table [V, D], ids in [0, V) -> [T, D]
Var embedding(Var table, std::span<const int> ids);

// ---- convolution -------------------------------------------------------
/// x [C, H, W], w [O, C, k, k], b [O] -> [O, Ho, Wo],
/// Ho = (H + 2*pad - k) / stride + 1.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
/// x [C, H, W], w [C, O, k, k], b [O] -> [O, Ho, Wo],
/// Ho = (H - 1) * stride - 2*pad + k + out_pad. Adjoint of conv2d with the
/// same (k, stride, pad) plus a bias.
Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad);

int conv_out_size(int in, int kernel, int stride, int pad);
int conv_transpose_out_size(int in, int kernel, int stride, int pad, int out_pad);

// ---- attention ---------------------------------------------------------
/// Multi-head scaled dot-product attention. q [Tq, D], k/v [Tk, D] with D
/// divisible by `heads`. `key_valid` (length Tk, empty = all valid) masks
/// keys; `causal` additionally masks key j > query i. Every query row must
/// keep at least one valid key.
Var attention(Var q, Var k, Var v, int heads, std::span<const std::uint8_t> key_valid = {},
              bool causal = false);

// ---- losses ------------------------------------------------------------
/// Mean token cross-entropy of logits [T, V] against target ids; positions
/// whose target equals `ignore_index` are excluded. Returns 0 when every
/// position is ignored.
Var cross_entropy(Var logits, std::span<const int> targets, int ignore_index = -1);

// ---- verification ------------------------------------------------------
struct FiniteDiffResult {
  bool pass = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::string message;
};

/// Compares `analytic[i]` against the central difference
/// (f(x+h e_i) - f(x-h e_i)) / 2h for each index in `coords`, mutating `x`
/// in place and restoring it. Error is |a - n| / max(1, |a|).
FiniteDiffResult finite_diff_check(const std::function<double()>& f, std::span<float> x,
                                   std::span<const float> analytic,
                                   std::span<const std::size_t> coords, float h, double tol);

}  // namespace rahf::ad
