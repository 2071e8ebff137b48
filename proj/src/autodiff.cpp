// SPDX-License-Identifier: Apache-2.0
#include "rahf/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace rahf::ad {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using MapV = Eigen::Map<Eigen::VectorXf>;
using CMapV = Eigen::Map<const Eigen::VectorXf>;

CMapM as_mat(const Tensor& t, int rows, int cols) { return CMapM(t.data(), rows, cols); }
MapM as_mat(Tensor& t, int rows, int cols) { return MapM(t.data(), rows, cols); }
CMapV as_vec(const Tensor& t) { return CMapV(t.data(), static_cast<Eigen::Index>(t.size())); }
MapV as_vec(Tensor& t) { return MapV(t.data(), static_cast<Eigen::Index>(t.size())); }

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

Tape& tape_of(Var a) {
  require(a.valid(), "autodiff: invalid Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  require(b.valid() && b.tape == &t, "autodiff: operands from different tapes");
  return t;
}

// cols[(c*k + ky)*k + kx, oy*wo + ox] = x[c, oy*s - p + ky, ox*s - p + kx]
void im2col(const float* x, int C, int H, int W, int k, int s, int p, int ho, int wo, float* cols) {
  const int n = ho * wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          float* dst = row + oy * wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            dst[ox] = (ix < 0 || ix >= W) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int C, int H, int W, int k, int s, int p, int ho, int wo, float* x) {
  const int n = ho * wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          float* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          const float* src = row + oy * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }
const std::vector<int>& Var::shape() const { return tape->value(*this).shape(); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) return Tensor::zeros(n.value.shape());
  return n.grad;
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool rg = false;
  if (record_) {
    for (const Var& p : parents) rg = rg || nodes_.at(p.id).requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!requires_grad(v)) return;
  Tensor& buf = grad_buffer(v);
  require(buf.size() == g.size(), "autodiff: gradient size mismatch");
  as_vec(buf) += as_vec(g);
}

void Tape::backward(Var out) {
  require(out.tape == this, "backward: Var from another tape");
  require(value(out).size() == 1, "backward: output must be a single element");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[out.id].requires_grad) return;
  grad_buffer(out)[0] = 1.0f;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad, n.value);
  }
}

// ---- elementwise -------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  as_vec(y) += as_vec(b.value());
  return t.push(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  as_vec(y) -= as_vec(b.value());
  return t.push(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) as_vec(t.grad_buffer(b)) -= as_vec(g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  as_vec(y).array() *= as_vec(b.value()).array();
  return t.push(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    if (t.requires_grad(a)) as_vec(t.grad_buffer(a)).array() += as_vec(g).array() * as_vec(b.value()).array();
    if (t.requires_grad(b)) as_vec(t.grad_buffer(b)).array() += as_vec(g).array() * as_vec(a.value()).array();
  });
}

Var scale(Var a, float s) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  as_vec(y) *= s;
  return t.push(std::move(y), {a},
                [a, s](Tape& t, const Tensor& g, const Tensor&) { as_vec(t.grad_buffer(a)) += s * as_vec(g); });
}

Var add_scalar(Var a, float s) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  as_vec(y).array() += s;
  return t.push(std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) { t.accumulate(a, g); });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  as_vec(y) = as_vec(y).array().square().matrix();
  return t.push(std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    as_vec(t.grad_buffer(a)).array() += 2.0f * as_vec(g).array() * as_vec(a.value()).array();
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  as_vec(y) = as_vec(y).cwiseMax(0.0f);
  return t.push(std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor& y) {
    as_vec(t.grad_buffer(a)).array() += (as_vec(y).array() > 0.0f).select(as_vec(g).array(), 0.0f);
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (float& v : y.storage()) v = 1.0f / (1.0f + std::exp(-v));
  return t.push(std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor& y) {
    auto ya = as_vec(y).array();
    as_vec(t.grad_buffer(a)).array() += as_vec(g).array() * ya * (1.0f - ya);
  });
}

// ---- reductions --------------------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (float v : a.value().values()) acc += v;
  return t.push(Tensor({1}, {static_cast<float>(acc)}), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    as_vec(t.grad_buffer(a)).array() += g[0];
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (float v : a.value().values()) acc += v;
  const float n = static_cast<float>(a.value().size());
  return t.push(Tensor({1}, {static_cast<float>(acc / n)}), {a}, [a, n](Tape& t, const Tensor& g, const Tensor&) {
    as_vec(t.grad_buffer(a)).array() += g[0] / n;
  });
}

Var mse(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mse");
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    acc += d * d;
  }
  const float n = static_cast<float>(av.size());
  return t.push(Tensor({1}, {static_cast<float>(acc / n)}), {a, b}, [a, b, n](Tape& t, const Tensor& g, const Tensor&) {
    const float c = 2.0f * g[0] / n;
    auto diff = (as_vec(a.value()) - as_vec(b.value())).eval();
    if (t.requires_grad(a)) as_vec(t.grad_buffer(a)) += c * diff;
    if (t.requires_grad(b)) as_vec(t.grad_buffer(b)) -= c * diff;
  });
}

// ---- shape -------------------------------------------------------------

Var reshape(Var a, std::vector<int> shape) {
  Tape& t = tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  return t.push(std::move(y), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    as_vec(t.grad_buffer(a)) += as_vec(g);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int r = a.value().rows();
  const int c = a.value().cols();
  Tensor y({c, r});
  as_mat(y, c, r) = as_mat(a.value(), r, c).transpose();
  return t.push(std::move(y), {a}, [a, r, c](Tape& t, const Tensor& g, const Tensor&) {
    as_mat(t.grad_buffer(a), r, c) += as_mat(g, c, r).transpose();
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const int d = a.value().cols();
  require(b.value().cols() == d, "concat_rows: column mismatch");
  const int ra = a.value().rows();
  const int rb = b.value().rows();
  Tensor y({ra + rb, d});
  std::copy(a.value().storage().begin(), a.value().storage().end(), y.storage().begin());
  std::copy(b.value().storage().begin(), b.value().storage().end(),
            y.storage().begin() + static_cast<std::ptrdiff_t>(a.value().size()));
  return t.push(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    const std::size_t na = a.value().size();
    if (t.requires_grad(a)) as_vec(t.grad_buffer(a)) += CMapV(g.data(), static_cast<Eigen::Index>(na));
    if (t.requires_grad(b)) {
      as_vec(t.grad_buffer(b)) += CMapV(g.data() + na, static_cast<Eigen::Index>(b.value().size()));
    }
  });
}

Var slice_rows(Var a, int begin, int end) {
  Tape& t = tape_of(a);
  const int r = a.value().rows();
  const int d = a.value().cols();
  require(0 <= begin && begin < end && end <= r, "slice_rows: bad range");
  Tensor y({end - begin, d});
  auto first = a.value().storage().begin() + static_cast<std::ptrdiff_t>(begin) * d;
  std::copy(first, first + static_cast<std::ptrdiff_t>(end - begin) * d, y.storage().begin());
  return t.push(std::move(y), {a}, [a, begin, d](Tape& t, const Tensor& g, const Tensor&) {
    MapV(t.grad_buffer(a).data() + static_cast<std::size_t>(begin) * d, static_cast<Eigen::Index>(g.size())) +=
        as_vec(g);
  });
}

Var patchify(Var image, int patch) {
  Tape& t = tape_of(image);
  const auto& s = image.shape();
  require(s.size() == 3, "patchify: expected [H, W, C]");
  const int H = s[0], W = s[1], C = s[2];
  require(patch > 0 && H % patch == 0 && W % patch == 0, "patchify: image not divisible by patch size");
  const int gh = H / patch, gw = W / patch;
  const int row_len = patch * patch * C;
  // index[out] = in
  auto index = std::make_shared<std::vector<int>>(static_cast<std::size_t>(gh) * gw * row_len);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px)
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < C; ++c) {
            const std::size_t out = (static_cast<std::size_t>(py * gw + px) * row_len) + (dy * patch + dx) * C + c;
            (*index)[out] = ((py * patch + dy) * W + (px * patch + dx)) * C + c;
          }
  Tensor y({gh * gw, row_len});
  const float* src = image.value().data();
  for (std::size_t i = 0; i < index->size(); ++i) y[i] = src[(*index)[i]];
  return t.push(std::move(y), {image}, [image, index](Tape& t, const Tensor& g, const Tensor&) {
    float* dst = t.grad_buffer(image).data();
    for (std::size_t i = 0; i < index->size(); ++i) dst[(*index)[i]] += g[i];
  });
}

// ---- linear algebra ----------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const int m = a.value().rows(), k = a.value().cols();
  require(b.value().rows() == k, "matmul: inner dims " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const int n = b.value().cols();
  Tensor y({m, n});
  as_mat(y, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, n);
  return t.push(std::move(y), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    auto gm = as_mat(g, m, n);
    if (t.requires_grad(a)) as_mat(t.grad_buffer(a), m, k).noalias() += gm * as_mat(b.value(), k, n).transpose();
    if (t.requires_grad(b)) as_mat(t.grad_buffer(b), k, n).noalias() += as_mat(a.value(), m, k).transpose() * gm;
  });
}

Var add_row_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const int r = x.value().rows(), c = x.value().cols();
  require(static_cast<int>(bias.value().size()) == c, "add_row_bias: bias length mismatch");
  Tensor y = x.value();
  as_mat(y, r, c).rowwise() += as_vec(bias.value()).transpose();
  return t.push(std::move(y), {x, bias}, [x, bias, r, c](Tape& t, const Tensor& g, const Tensor&) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) as_vec(t.grad_buffer(bias)) += as_mat(g, r, c).colwise().sum().transpose();
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of(x, w);
  require(b.tape == &t, "linear: operands from different tapes");
  const int n = x.value().rows(), in = x.value().cols();
  require(w.value().rank() == 2 && w.value().dim(0) == in,
          "linear: weight " + shape_string(w.shape()) + " does not take input " + shape_string(x.shape()));
  const int out = w.value().dim(1);
  require(static_cast<int>(b.value().size()) == out, "linear: bias length mismatch");
  Tensor y({n, out});
  auto ym = as_mat(y, n, out);
  ym.noalias() = as_mat(x.value(), n, in) * as_mat(w.value(), in, out);
  ym.rowwise() += as_vec(b.value()).transpose();
  return t.push(std::move(y), {x, w, b}, [x, w, b, n, in, out](Tape& t, const Tensor& g, const Tensor&) {
    auto gm = as_mat(g, n, out);
    if (t.requires_grad(x)) as_mat(t.grad_buffer(x), n, in).noalias() += gm * as_mat(w.value(), in, out).transpose();
    if (t.requires_grad(w)) as_mat(t.grad_buffer(w), in, out).noalias() += as_mat(x.value(), n, in).transpose() * gm;
    if (t.requires_grad(b)) as_vec(t.grad_buffer(b)) += gm.colwise().sum().transpose();
  });
}

// ---- normalization / activation ---------------------------------------

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const int r = a.value().rows(), c = a.value().cols();
  Tensor y = a.value();
  auto ym = as_mat(y, r, c);
  for (int i = 0; i < r; ++i) {
    const float mx = ym.row(i).maxCoeff();
    ym.row(i) = (ym.row(i).array() - mx).exp().matrix();
    ym.row(i) /= ym.row(i).sum();
  }
  return t.push(std::move(y), {a}, [a, r, c](Tape& t, const Tensor& g, const Tensor& y) {
    auto ym = as_mat(y, r, c);
    auto gm = as_mat(g, r, c);
    auto dx = as_mat(t.grad_buffer(a), r, c);
    for (int i = 0; i < r; ++i) {
      const float dot = gm.row(i).dot(ym.row(i));
      dx.row(i).array() += ym.row(i).array() * (gm.row(i).array() - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, float eps) {
  Tape& t = tape_of(x, gamma);
  require(beta.tape == &t, "layer_norm: operands from different tapes");
  const int r = x.value().rows(), c = x.value().cols();
  require(static_cast<int>(gamma.value().size()) == c && static_cast<int>(beta.value().size()) == c,
          "layer_norm: scale/shift length mismatch");
  auto xhat = std::make_shared<Tensor>(x.value());
  auto rstd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(r));
  auto xm = as_mat(*xhat, r, c);
  for (int i = 0; i < r; ++i) {
    const float mu = xm.row(i).mean();
    xm.row(i).array() -= mu;
    const float var = xm.row(i).squaredNorm() / static_cast<float>(c);
    const float rs = 1.0f / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    xm.row(i) *= rs;
  }
  Tensor y = *xhat;
  auto ym = as_mat(y, r, c);
  ym.array().rowwise() *= as_vec(gamma.value()).transpose().array();
  ym.rowwise() += as_vec(beta.value()).transpose();
  return t.push(std::move(y), {x, gamma, beta},
                [x, gamma, beta, r, c, xhat, rstd](Tape& t, const Tensor& g, const Tensor&) {
                  auto gm = as_mat(g, r, c);
                  auto xh = as_mat(*xhat, r, c);
                  if (t.requires_grad(gamma)) {
                    as_vec(t.grad_buffer(gamma)) += (gm.array() * xh.array()).colwise().sum().matrix().transpose();
                  }
                  if (t.requires_grad(beta)) as_vec(t.grad_buffer(beta)) += gm.colwise().sum().transpose();
                  if (t.requires_grad(x)) {
                    auto dx = as_mat(t.grad_buffer(x), r, c);
                    const auto gam = as_vec(gamma.value()).transpose().array();
                    for (int i = 0; i < r; ++i) {
                      Eigen::RowVectorXf dxh = (gm.row(i).array() * gam).matrix();
                      const float m1 = dxh.mean();
                      const float m2 = dxh.dot(xh.row(i)) / static_cast<float>(c);
                      dx.row(i).array() += (*rstd)[i] * (dxh.array() - m1 - xh.row(i).array() * m2);
                    }
                  }
                });
}

// ---- lookup ------------------------------------------------------------

Var embedding(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  const int v = table.value().rows(), d = table.value().cols();
  auto idv = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  require(!idv->empty(), "embedding: empty id list");
  Tensor y({static_cast<int>(idv->size()), d});
  for (std::size_t i = 0; i < idv->size(); ++i) {
    const int id = (*idv)[i];
    require(id >= 0 && id < v, "embedding: id " + std::to_string(id) + " out of range");
    std::copy_n(table.value().data() + static_cast<std::size_t>(id) * d, d, y.data() + i * d);
  }
  return t.push(std::move(y), {table}, [table, idv, d](Tape& t, const Tensor& g, const Tensor&) {
    float* dst = t.grad_buffer(table).data();
    for (std::size_t i = 0; i < idv->size(); ++i) {
      float* row = dst + static_cast<std::size_t>((*idv)[i]) * d;
      for (int j = 0; j < d; ++j) row[j] += g[i * d + j];
    }
  });
}

// ---- convolution -------------------------------------------------------

int conv_out_size(int in, int kernel, int stride, int pad) {
  require(stride > 0 && kernel > 0 && pad >= 0, "conv: bad geometry");
  const int span = in + 2 * pad - kernel;
  require(span >= 0, "conv: kernel larger than padded input");
  return span / stride + 1;
}

int conv_transpose_out_size(int in, int kernel, int stride, int pad, int out_pad) {
  require(stride > 0 && kernel > 0 && pad >= 0 && out_pad >= 0 && out_pad < stride,
          "conv_transpose: bad geometry");
  const int out = (in - 1) * stride - 2 * pad + kernel + out_pad;
  require(out > 0, "conv_transpose: non-positive output size");
  return out;
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  Tape& t = tape_of(x, w);
  require(b.tape == &t, "conv2d: operands from different tapes");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 3 && ws.size() == 4 && ws[2] == ws[3], "conv2d: expected x [C,H,W], w [O,C,k,k]");
  const int C = xs[0], H = xs[1], W = xs[2];
  const int O = ws[0], k = ws[2];
  require(ws[1] == C, "conv2d: channel mismatch " + shape_string(xs) + " vs " + shape_string(ws));
  require(static_cast<int>(b.value().size()) == O, "conv2d: bias length mismatch");
  const int ho = conv_out_size(H, k, stride, pad), wo = conv_out_size(W, k, stride, pad);
  const int ck = C * k * k, n = ho * wo;
  auto cols = std::make_shared<Tensor>(std::vector<int>{ck, n});
  im2col(x.value().data(), C, H, W, k, stride, pad, ho, wo, cols->data());
  Tensor y({O, ho, wo});
  auto ym = as_mat(y, O, n);
  ym.noalias() = as_mat(w.value(), O, ck) * as_mat(*cols, ck, n);
  ym.colwise() += as_vec(b.value());
  return t.push(std::move(y), {x, w, b},
                [x, w, b, cols, C, H, W, O, k, stride, pad, ho, wo, ck, n](Tape& t, const Tensor& g, const Tensor&) {
                  auto gm = as_mat(g, O, n);
                  if (t.requires_grad(w)) as_mat(t.grad_buffer(w), O, ck).noalias() += gm * as_mat(*cols, ck, n).transpose();
                  if (t.requires_grad(b)) as_vec(t.grad_buffer(b)) += gm.rowwise().sum();
                  if (t.requires_grad(x)) {
                    Tensor dcols({ck, n});
                    as_mat(dcols, ck, n).noalias() = as_mat(w.value(), O, ck).transpose() * gm;
                    col2im(dcols.data(), C, H, W, k, stride, pad, ho, wo, t.grad_buffer(x).data());
                  }
                });
}

Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad) {
  Tape& t = tape_of(x, w);
  require(b.tape == &t, "conv_transpose2d: operands from different tapes");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 3 && ws.size() == 4 && ws[2] == ws[3], "conv_transpose2d: expected x [C,H,W], w [C,O,k,k]");
  const int C = xs[0], H = xs[1], W = xs[2];
  const int O = ws[1], k = ws[2];
  require(ws[0] == C, "conv_transpose2d: channel mismatch " + shape_string(xs) + " vs " + shape_string(ws));
  require(static_cast<int>(b.value().size()) == O, "conv_transpose2d: bias length mismatch");
  const int ho = conv_transpose_out_size(H, k, stride, pad, out_pad);
  const int wo = conv_transpose_out_size(W, k, stride, pad, out_pad);
  const int ok = O * k * k, n = H * W;
  Tensor cols({ok, n});
  as_mat(cols, ok, n).noalias() = as_mat(w.value(), C, ok).transpose() * as_mat(x.value(), C, n);
  Tensor y({O, ho, wo});
  col2im(cols.data(), O, ho, wo, k, stride, pad, H, W, y.data());
  as_mat(y, O, ho * wo).colwise() += as_vec(b.value());
  return t.push(std::move(y), {x, w, b},
                [x, w, b, C, O, k, stride, pad, ho, wo, ok, n, H, W](Tape& t, const Tensor& g, const Tensor&) {
                  if (t.requires_grad(b)) as_vec(t.grad_buffer(b)) += as_mat(g, O, ho * wo).rowwise().sum();
                  if (!t.requires_grad(x) && !t.requires_grad(w)) return;
                  Tensor gcols({ok, n});
                  im2col(g.data(), O, ho, wo, k, stride, pad, H, W, gcols.data());
                  auto gc = as_mat(gcols, ok, n);
                  if (t.requires_grad(x)) as_mat(t.grad_buffer(x), C, n).noalias() += as_mat(w.value(), C, ok) * gc;
                  if (t.requires_grad(w)) {
                    as_mat(t.grad_buffer(w), C, ok).noalias() += as_mat(x.value(), C, n) * gc.transpose();
                  }
                });
}

// ---- attention ---------------------------------------------------------

Var attention(Var q, Var k, Var v, int heads, std::span<const std::uint8_t> key_valid, bool causal) {
  Tape& t = tape_of(q, k);
  require(v.tape == &t, "attention: operands from different tapes");
  const int tq = q.value().rows(), d = q.value().cols();
  const int tk = k.value().rows();
  require(k.value().cols() == d && v.value().cols() == d && v.value().rows() == tk, "attention: q/k/v shape mismatch");
  require(heads > 0 && d % heads == 0, "attention: hidden size not divisible by heads");
  require(key_valid.empty() || static_cast<int>(key_valid.size()) == tk, "attention: key mask length mismatch");
  const int dh = d / heads;
  const float sc = 1.0f / std::sqrt(static_cast<float>(dh));

  RowMat mask = RowMat::Ones(tq, tk);
  for (int i = 0; i < tq; ++i) {
    for (int j = 0; j < tk; ++j) {
      if ((!key_valid.empty() && !key_valid[j]) || (causal && j > i)) mask(i, j) = 0.0f;
    }
    require(mask.row(i).sum() > 0.0f, "attention: query row " + std::to_string(i) + " has no valid key");
  }

  auto probs = std::make_shared<std::vector<RowMat>>(heads);
  Tensor y({tq, d});
  auto qm = as_mat(q.value(), tq, d);
  auto km = as_mat(k.value(), tk, d);
  auto vm = as_mat(v.value(), tk, d);
  auto ym = as_mat(y, tq, d);
  for (int h = 0; h < heads; ++h) {
    RowMat s = (qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose()) * sc;
    for (int i = 0; i < tq; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < tk; ++j)
        if (mask(i, j) != 0.0f) mx = std::max(mx, s(i, j));
      float total = 0.0f;
      for (int j = 0; j < tk; ++j) {
        const float e = mask(i, j) != 0.0f ? std::exp(s(i, j) - mx) : 0.0f;
        s(i, j) = e;
        total += e;
      }
      s.row(i) /= total;
    }
    ym.middleCols(h * dh, dh).noalias() = s * vm.middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  return t.push(std::move(y), {q, k, v}, [q, k, v, heads, tq, tk, d, dh, sc, probs](Tape& t, const Tensor& g, const Tensor&) {
    auto gm = as_mat(g, tq, d);
    auto qm = as_mat(q.value(), tq, d);
    auto km = as_mat(k.value(), tk, d);
    auto vm = as_mat(v.value(), tk, d);
    const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
    for (int h = 0; h < heads; ++h) {
      const RowMat& p = (*probs)[h];
      auto go = gm.middleCols(h * dh, dh);
      if (gv) as_mat(t.grad_buffer(v), tk, d).middleCols(h * dh, dh).noalias() += p.transpose() * go;
      if (!gq && !gk) continue;
      RowMat dp = go * vm.middleCols(h * dh, dh).transpose();
      Eigen::VectorXf rowdot = (dp.array() * p.array()).rowwise().sum();
      RowMat ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * sc;
      if (gq) as_mat(t.grad_buffer(q), tq, d).middleCols(h * dh, dh).noalias() += ds * km.middleCols(h * dh, dh);
      if (gk) as_mat(t.grad_buffer(k), tk, d).middleCols(h * dh, dh).noalias() += ds.transpose() * qm.middleCols(h * dh, dh);
    }
  });
}

// ---- losses ------------------------------------------------------------

Var cross_entropy(Var logits, std::span<const int> targets, int ignore_index) {
  Tape& t = tape_of(logits);
  const int r = logits.value().rows(), vocab = logits.value().cols();
  require(static_cast<int>(targets.size()) == r, "cross_entropy: target length mismatch");
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  auto lm = as_mat(logits.value(), r, vocab);
  auto probs = std::make_shared<RowMat>(r, vocab);
  double loss = 0.0;
  int counted = 0;
  for (int i = 0; i < r; ++i) {
    const int y = (*tg)[i];
    if (y == ignore_index) continue;
    require(y >= 0 && y < vocab, "cross_entropy: target id out of range");
    const double mx = lm.row(i).maxCoeff();
    double z = 0.0;
    for (int j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(lm(i, j)) - mx);
    const double lse = mx + std::log(z);
    loss += lse - lm(i, y);
    for (int j = 0; j < vocab; ++j) (*probs)(i, j) = static_cast<float>(std::exp(lm(i, j) - lse));
    ++counted;
  }
  const float n = static_cast<float>(counted);
  const float value = counted > 0 ? static_cast<float>(loss / counted) : 0.0f;
  return t.push(Tensor({1}, {value}), {logits}, [logits, tg, probs, r, vocab, n, ignore_index](Tape& t, const Tensor& g, const Tensor&) {
    if (n == 0.0f) return;
    auto dx = as_mat(t.grad_buffer(logits), r, vocab);
    const float c = g[0] / n;
    for (int i = 0; i < r; ++i) {
      const int y = (*tg)[i];
      if (y == ignore_index) continue;
      dx.row(i) += c * probs->row(i);
      dx(i, y) -= c;
    }
  });
}

// ---- verification ------------------------------------------------------

FiniteDiffResult finite_diff_check(const std::function<double()>& f, std::span<float> x,
                                   std::span<const float> analytic, std::span<const std::size_t> coords, float h,
                                   double tol) {
  FiniteDiffResult res;
  if (analytic.size() != x.size()) {
    res.message = "analytic gradient length differs from input length";
    return res;
  }
  res.pass = true;
  for (std::size_t idx : coords) {
    if (idx >= x.size()) {
      res.pass = false;
      res.message = "coordinate " + std::to_string(idx) + " out of range";
      return res;
    }
    const float orig = x[idx];
    x[idx] = orig + h;
    const float xp = x[idx];
    const double fp = f();
    x[idx] = orig - h;
    const float xm = x[idx];
    const double fm = f();
    x[idx] = orig;
    const double a = analytic[idx];
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(a)) {
      res.pass = false;
      res.worst_index = idx;
      res.message = "non-finite value at coordinate " + std::to_string(idx);
      return res;
    }
    const double numeric = (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    ++res.checked;
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = idx;
    }
  }
  if (res.max_rel_error > tol) {
    res.pass = false;
    std::ostringstream os;
    os << "max relative error " << res.max_rel_error << " at coordinate " << res.worst_index << " exceeds " << tol;
    res.message = os.str();
  }
  return res;
}

}  // namespace rahf::ad
