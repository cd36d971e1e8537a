// Copyright 2026 The FBR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fbr/numerics.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fbr/error.hpp"

namespace fbr {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double>, std::span<Tensor>)> backward;
};
}  // namespace detail

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), Errc::argument,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

void check_rank(const Tensor& a, std::size_t rank, const char* op) {
  require(a.rank() == rank, Errc::argument,
          std::string(op) + ": expected rank " + std::to_string(rank) +
              ", got " + shape_str(a.shape()));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::argument: return "argument";
    case Errc::degenerate_input: return "degenerate_input";
    case Errc::contract: return "contract";
    case Errc::numeric: return "numeric";
    case Errc::class_absent: return "class_absent";
    case Errc::empty_background: return "empty_background";
    case Errc::empty_bank: return "empty_bank";
    case Errc::empty_pool: return "empty_pool";
    case Errc::insufficient_classes: return "insufficient_classes";
    case Errc::undefined_band: return "undefined_band";
    case Errc::generation: return "generation";
    case Errc::config: return "config";
    case Errc::io: return "io";
    case Errc::checkpoint: return "checkpoint";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {0};
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  require(shape_numel(shape) == values.size(), Errc::argument,
          "Tensor::from: " + std::to_string(values.size()) +
              " values for shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < rank(), Errc::argument, "Tensor::dim: axis out of range");
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  require(numel() == 1, Errc::contract,
          "Tensor::item on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return from(node_->shape, node_->value, false);
}

void accumulate_grad(const Tensor& t, std::span<const double> contribution) {
  auto g = grad_buffer(t);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

std::span<double> grad_buffer(const Tensor& t) {
  auto& node = *t.node();
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tensor::backward() const {
  require(numel() == 1, Errc::contract,
          "backward() needs a scalar, got " + shape_str(shape()));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].node().get();
      if (child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward) continue;
    if (!node->grad.empty()) node->backward(node->grad, node->inputs);
    node->grad.clear();  // intermediate buffers are single-use
  }
}

Tensor make_op_result(
    Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
    std::function<void(std::span<const double>, std::span<Tensor>)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(Errc::numeric, "non-finite value produced");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Vector kernels

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::argument, "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vec normalized(std::span<const double> a) {
  const double n = norm2(a);
  require(n > 0.0, Errc::degenerate_input, "normalized: zero-norm vector");
  Vec out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

Vec softmax(std::span<const double> v) {
  require(!v.empty(), Errc::argument, "softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  require(std::isfinite(m), Errc::argument, "softmax: non-finite input");
  Vec out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::argument, "cosine_sim: size mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  require(na > 0.0 && nb > 0.0, Errc::degenerate_input,
          "cosine_sim: zero-norm input");
  // Normalizing first keeps the product symmetric in its arguments.
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] / na) * (b[i] / nb);
  return std::clamp(s, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          for (auto& t : in)
                            if (t.requires_grad()) accumulate_grad(t, g);
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          if (in[0].requires_grad()) accumulate_grad(in[0], g);
                          if (in[1].requires_grad()) {
                            auto gb = grad_buffer(in[1]);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          for (int k = 0; k < 2; ++k) {
                            if (!in[k].requires_grad()) continue;
                            auto other = in[1 - k].data();
                            auto gk = grad_buffer(in[k]);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              gk[i] += g[i] * other[i];
                          }
                        });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return make_op_result(a.shape(), std::move(out), {a},
                        [s](std::span<const double> g, std::span<Tensor> in) {
                          auto ga = grad_buffer(in[0]);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                        });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result({}, {s}, {a},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          auto ga = grad_buffer(in[0]);
                          for (double& v : ga) v += g[0];
                        });
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, Errc::argument, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_op_result(a.shape(), std::move(out), {a},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          auto x = in[0].data();
                          auto ga = grad_buffer(in[0]);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (x[i] > 0.0) ga[i] += g[i];
                        });
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), Errc::argument,
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result(std::move(shape), std::move(out), {a},
                        [](std::span<const double> g, std::span<Tensor> in) {
                          accumulate_grad(in[0], g);
                        });
}

Tensor gather(const Tensor& a, std::vector<std::size_t> indices, Shape shape) {
  require(shape_numel(shape) == indices.size(), Errc::argument,
          "gather: index count does not match output shape");
  std::vector<double> out(indices.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < x.size(), Errc::argument, "gather: index out of range");
    out[i] = x[indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return make_op_result(std::move(shape), std::move(out), {a},
                        [idx](std::span<const double> g, std::span<Tensor> in) {
                          auto ga = grad_buffer(in[0]);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[(*idx)[i]] += g[i];
                        });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_rank(x, 2, "linear");
  check_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  require(weight.dim(1) == in, Errc::argument, "linear: input width mismatch");
  const bool has_bias = bias.numel() > 0;
  if (has_bias)
    require(bias.numel() == out, Errc::argument, "linear: bias size mismatch");

  std::vector<double> y(n * out);
  ConstMatMap X(x.data().data(), n, in);
  ConstMatMap W(weight.data().data(), out, in);
  MatMap Y(y.data(), n, out);
  Y.noalias() = X * W.transpose();
  if (has_bias)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < out; ++c) Y(r, c) += bias.data()[c];

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op_result(
      {n, out}, std::move(y), std::move(inputs),
      [n, in, out](std::span<const double> g, std::span<Tensor> ts) {
        ConstMatMap G(g.data(), n, out);
        if (ts[0].requires_grad()) {
          MatMap dX(grad_buffer(ts[0]).data(), n, in);
          dX.noalias() += G * ConstMatMap(ts[1].data().data(), out, in);
        }
        if (ts[1].requires_grad()) {
          MatMap dW(grad_buffer(ts[1]).data(), out, in);
          dW.noalias() += G.transpose() * ConstMatMap(ts[0].data().data(), n, in);
        }
        if (ts.size() > 2 && ts[2].requires_grad()) {
          auto db = grad_buffer(ts[2]);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out; ++c) db[c] += G(r, c);
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t P = g.pixels();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.wo + ox] =
                inside ? img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t P = g.pixels();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w +
                static_cast<std::size_t>(ix)] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  check_rank(x, 4, "conv2d");
  check_rank(weight, 4, "conv2d");
  require(stride >= 1, Errc::argument, "conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  require(weight.dim(1) == g.cin && weight.dim(3) == g.k, Errc::argument,
          "conv2d: weight shape " + shape_str(weight.shape()) +
              " incompatible with input " + shape_str(x.shape()));
  require(g.h + 2 * pad >= g.k && g.w + 2 * pad >= g.k, Errc::argument,
          "conv2d: kernel larger than padded input");
  require(bias.numel() == g.cout, Errc::argument, "conv2d: bias size mismatch");
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  const std::size_t CK = g.patch(), P = g.pixels();
  auto cols = std::make_shared<std::vector<double>>(g.batch * CK * P);
  std::vector<double> y(g.batch * g.cout * P);
  ConstMatMap W(weight.data().data(), g.cout, CK);
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* col = cols->data() + b * CK * P;
    im2col(x.data().data() + b * g.cin * g.h * g.w, g, col);
    MatMap Y(y.data() + b * g.cout * P, g.cout, P);
    Y.noalias() = W * ConstMatMap(col, CK, P);
    for (std::size_t c = 0; c < g.cout; ++c) Y.row(c).array() += bias.data()[c];
  }

  return make_op_result(
      {g.batch, g.cout, g.ho, g.wo}, std::move(y), {x, weight, bias},
      [g, cols](std::span<const double> grad, std::span<Tensor> in) {
        const std::size_t CK = g.patch(), P = g.pixels();
        ConstMatMap W(in[1].data().data(), g.cout, CK);
        std::vector<double> dcol(in[0].requires_grad() ? CK * P : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          ConstMatMap G(grad.data() + b * g.cout * P, g.cout, P);
          ConstMatMap col(cols->data() + b * CK * P, CK, P);
          if (in[1].requires_grad()) {
            MatMap dW(grad_buffer(in[1]).data(), g.cout, CK);
            dW.noalias() += G * col.transpose();
          }
          if (in[2].requires_grad()) {
            auto db = grad_buffer(in[2]);
            for (std::size_t c = 0; c < g.cout; ++c) db[c] += G.row(c).sum();
          }
          if (in[0].requires_grad()) {
            MatMap dC(dcol.data(), CK, P);
            dC.noalias() = W.transpose() * G;
            col2im_add(dcol.data(), g,
                       grad_buffer(in[0]).data() + b * g.cin * g.h * g.w);
          }
        }
      });
}

Tensor pointwise_linear(const Tensor& x, const Tensor& weight,
                        const Tensor& bias) {
  check_rank(x, 4, "pointwise_linear");
  check_rank(weight, 2, "pointwise_linear");
  const std::size_t B = x.dim(0), cin = x.dim(1), P = x.dim(2) * x.dim(3);
  const std::size_t cout = weight.dim(0);
  require(weight.dim(1) == cin, Errc::argument,
          "pointwise_linear: weight expects " + std::to_string(weight.dim(1)) +
              " input channels, got " + std::to_string(cin));
  const bool has_bias = bias.numel() > 0;
  if (has_bias)
    require(bias.numel() == cout, Errc::argument,
            "pointwise_linear: bias size mismatch");

  std::vector<double> y(B * cout * P);
  ConstMatMap W(weight.data().data(), cout, cin);
  for (std::size_t b = 0; b < B; ++b) {
    MatMap Y(y.data() + b * cout * P, cout, P);
    Y.noalias() = W * ConstMatMap(x.data().data() + b * cin * P, cin, P);
    if (has_bias)
      for (std::size_t c = 0; c < cout; ++c) Y.row(c).array() += bias.data()[c];
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op_result(
      {B, cout, x.dim(2), x.dim(3)}, std::move(y), std::move(inputs),
      [B, cin, cout, P](std::span<const double> g, std::span<Tensor> in) {
        ConstMatMap W(in[1].data().data(), cout, cin);
        for (std::size_t b = 0; b < B; ++b) {
          ConstMatMap G(g.data() + b * cout * P, cout, P);
          if (in[0].requires_grad()) {
            MatMap dX(grad_buffer(in[0]).data() + b * cin * P, cin, P);
            dX.noalias() += W.transpose() * G;
          }
          if (in[1].requires_grad()) {
            MatMap dW(grad_buffer(in[1]).data(), cout, cin);
            dW.noalias() +=
                G * ConstMatMap(in[0].data().data() + b * cin * P, cin, P).transpose();
          }
          if (in.size() > 2 && in[2].requires_grad()) {
            auto db = grad_buffer(in[2]);
            for (std::size_t c = 0; c < cout; ++c) db[c] += G.row(c).sum();
          }
        }
      });
}

Tensor thresholded_avg_pool(const Tensor& x, double threshold) {
  check_rank(x, 4, "thresholded_avg_pool");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  require(P > 0, Errc::argument, "thresholded_avg_pool: empty spatial extent");
  // Per (b, c): weight applied to each qualifying entry, and whether the
  // threshold mask was empty (fallback to the full mean).
  auto weights = std::make_shared<std::vector<double>>(B * C);
  auto fallback = std::make_shared<std::vector<char>>(B * C);
  std::vector<double> out(B * C);
  const auto v = x.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* row = v.data() + bc * P;
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < P; ++j)
      if (row[j] > threshold) {
        s += row[j];
        ++count;
      }
    if (count == 0) {
      s = 0.0;
      for (std::size_t j = 0; j < P; ++j) s += row[j];
      count = P;
      (*fallback)[bc] = 1;
    }
    out[bc] = s / static_cast<double>(count);
    (*weights)[bc] = 1.0 / static_cast<double>(count);
  }
  return make_op_result(
      {B, C}, std::move(out), {x},
      [P, threshold, weights, fallback](std::span<const double> g,
                                        std::span<Tensor> in) {
        const auto v = in[0].data();
        auto gx = grad_buffer(in[0]);
        for (std::size_t bc = 0; bc < g.size(); ++bc) {
          const double w = g[bc] * (*weights)[bc];
          for (std::size_t j = 0; j < P; ++j) {
            const std::size_t i = bc * P + j;
            if ((*fallback)[bc] || v[i] > threshold) gx[i] += w;
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, double eps) {
  check_rank(x, 4, "batch_norm");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  const double n = static_cast<double>(B * P);
  require(B * P > 0, Errc::argument, "batch_norm: empty input");
  auto inv_std = std::make_shared<std::vector<double>>(C);
  std::vector<double> y(x.numel());
  const auto v = x.data();
  for (std::size_t c = 0; c < C; ++c) {
    double mu = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < P; ++j) mu += v[(b * C + c) * P + j];
    mu /= n;
    double var = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < P; ++j) {
        const double d = v[(b * C + c) * P + j] - mu;
        var += d * d;
      }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < P; ++j) {
        const std::size_t i = (b * C + c) * P + j;
        y[i] = (v[i] - mu) * is;
      }
  }
  auto y_saved = std::make_shared<std::vector<double>>(y);
  return make_op_result(
      x.shape(), std::move(y), {x},
      [B, C, P, n, inv_std, y_saved](std::span<const double> g,
                                     std::span<Tensor> in) {
        auto gx = grad_buffer(in[0]);
        const auto& yv = *y_saved;
        for (std::size_t c = 0; c < C; ++c) {
          double sg = 0.0, sgy = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < P; ++j) {
              const std::size_t i = (b * C + c) * P + j;
              sg += g[i];
              sgy += g[i] * yv[i];
            }
          const double k = (*inv_std)[c] / n;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < P; ++j) {
              const std::size_t i = (b * C + c) * P + j;
              gx[i] += k * (n * g[i] - sg - yv[i] * sgy);
            }
        }
      });
}

Tensor l2_normalize_rows(const Tensor& x) {
  check_rank(x, 2, "l2_normalize_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto norms = std::make_shared<std::vector<double>>(n);
  std::vector<double> y(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r) {
    const double nr = norm2(std::span<const double>(y.data() + r * d, d));
    require(nr > 0.0, Errc::degenerate_input,
            "l2_normalize_rows: zero-norm row " + std::to_string(r));
    (*norms)[r] = nr;
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] /= nr;
  }
  auto y_saved = std::make_shared<std::vector<double>>(y);
  return make_op_result(
      x.shape(), std::move(y), {x},
      [n, d, norms, y_saved](std::span<const double> g, std::span<Tensor> in) {
        auto gx = grad_buffer(in[0]);
        for (std::size_t r = 0; r < n; ++r) {
          const double* yr = y_saved->data() + r * d;
          const double* gr = g.data() + r * d;
          double yg = 0.0;
          for (std::size_t c = 0; c < d; ++c) yg += yr[c] * gr[c];
          for (std::size_t c = 0; c < d; ++c)
            gx[r * d + c] += (gr[c] - yr[c] * yg) / (*norms)[r];
        }
      });
}

Tensor weighted_mean_rows(const Tensor& x, const Tensor& weights) {
  check_rank(x, 2, "weighted_mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(weights.numel() == n, Errc::argument,
          "weighted_mean_rows: one weight per row required");
  require(n > 0, Errc::argument, "weighted_mean_rows: no rows");
  double total = 0.0;
  for (double w : weights.data()) total += w;
  require(total > 0.0, Errc::degenerate_input,
          "weighted_mean_rows: weights must have positive sum");
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      out[c] += weights.data()[r] * x.data()[r * d + c];
  for (double& v : out) v /= total;
  auto out_saved = std::make_shared<std::vector<double>>(out);
  return make_op_result(
      {d}, std::move(out), {x, weights},
      [n, d, total, out_saved](std::span<const double> g, std::span<Tensor> in) {
        if (in[0].requires_grad()) {
          auto gx = grad_buffer(in[0]);
          for (std::size_t r = 0; r < n; ++r) {
            const double w = in[1].data()[r] / total;
            for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += w * g[c];
          }
        }
        if (in[1].requires_grad()) {
          auto gw = grad_buffer(in[1]);
          double mg = 0.0;
          for (std::size_t c = 0; c < d; ++c) mg += (*out_saved)[c] * g[c];
          for (std::size_t r = 0; r < n; ++r) {
            double xg = 0.0;
            for (std::size_t c = 0; c < d; ++c) xg += in[0].data()[r * d + c] * g[c];
            gw[r] += (xg - mg) / total;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require(logits.numel() == targets.size() && !targets.empty(), Errc::argument,
          "bce_with_logits: target count mismatch");
  const std::size_t n = targets.size();
  double s = 0.0;
  const auto z = logits.data();
  for (std::size_t i = 0; i < n; ++i)
    s += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  auto t = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
  return make_op_result(
      {}, {s / static_cast<double>(n)}, {logits},
      [t](std::span<const double> g, std::span<Tensor> in) {
        const auto z = in[0].data();
        auto gz = grad_buffer(in[0]);
        const double k = g[0] / static_cast<double>(t->size());
        for (std::size_t i = 0; i < t->size(); ++i) {
          const double sig = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                       : std::exp(z[i]) / (1.0 + std::exp(z[i]));
          gz[i] += k * (sig - (*t)[i]);
        }
      });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets,
                            double eps) {
  require(probs.numel() == targets.size() && !targets.empty(), Errc::argument,
          "binary_cross_entropy: target count mismatch");
  const std::size_t n = targets.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(probs.data()[i], eps, 1.0 - eps);
    s -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  auto t = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
  return make_op_result(
      {}, {s / static_cast<double>(n)}, {probs},
      [t, eps](std::span<const double> g, std::span<Tensor> in) {
        const auto p = in[0].data();
        auto gp = grad_buffer(in[0]);
        const double k = g[0] / static_cast<double>(t->size());
        for (std::size_t i = 0; i < t->size(); ++i) {
          if (p[i] < eps || p[i] > 1.0 - eps) continue;  // clipped: flat
          gp[i] += k * (-(*t)[i] / p[i] + (1.0 - (*t)[i]) / (1.0 - p[i]));
        }
      });
}

Tensor info_nce_sum(const Tensor& queries, const Tensor& positive,
                    const Tensor& negatives, double tau) {
  check_rank(queries, 2, "info_nce_sum");
  require(tau > 0.0, Errc::argument, "info_nce_sum: tau must be positive");
  const std::size_t n = queries.dim(0), d = queries.dim(1);
  require(positive.numel() == d, Errc::argument,
          "info_nce_sum: positive dimension mismatch");
  const std::size_t m = negatives.numel() == 0 ? 0 : negatives.dim(0);
  if (m > 0) {
    check_rank(negatives, 2, "info_nce_sum");
    require(negatives.dim(1) == d, Errc::argument,
            "info_nce_sum: negative dimension mismatch");
  }
  // Softmax weights over [positive, negatives...] per query, kept for backward.
  auto probs = std::make_shared<std::vector<double>>(n * (m + 1));
  const double* q = queries.data().data();
  const double* p = positive.data().data();
  const double* z = negatives.data().data();
  double total = 0.0;
  std::vector<double> logits(m + 1);
  for (std::size_t r = 0; r < n; ++r) {
    const double* qr = q + r * d;
    double l0 = 0.0;
    for (std::size_t c = 0; c < d; ++c) l0 += qr[c] * p[c];
    logits[0] = l0 / tau;
    for (std::size_t j = 0; j < m; ++j) {
      double lj = 0.0;
      for (std::size_t c = 0; c < d; ++c) lj += qr[c] * z[j * d + c];
      logits[j + 1] = lj / tau;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double zsum = 0.0;
    for (double l : logits) zsum += std::exp(l - mx);
    const double lse = mx + std::log(zsum);
    total += lse - logits[0];
    for (std::size_t j = 0; j <= m; ++j)
      (*probs)[r * (m + 1) + j] = std::exp(logits[j] - lse);
  }
  return make_op_result(
      {}, {total}, {queries, positive, negatives},
      [n, m, d, tau, probs](std::span<const double> g, std::span<Tensor> in) {
        const double* q = in[0].data().data();
        const double* p = in[1].data().data();
        const double* z = in[2].data().data();
        const double k = g[0] / tau;
        double* gq = in[0].requires_grad() ? grad_buffer(in[0]).data() : nullptr;
        double* gp = in[1].requires_grad() ? grad_buffer(in[1]).data() : nullptr;
        double* gz = (m > 0 && in[2].requires_grad()) ? grad_buffer(in[2]).data()
                                                       : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
          const double* pr = probs->data() + r * (m + 1);
          const double a0 = k * (pr[0] - 1.0);
          if (gq) {
            for (std::size_t c = 0; c < d; ++c) gq[r * d + c] += a0 * p[c];
            for (std::size_t j = 0; j < m; ++j) {
              const double aj = k * pr[j + 1];
              for (std::size_t c = 0; c < d; ++c) gq[r * d + c] += aj * z[j * d + c];
            }
          }
          if (gp)
            for (std::size_t c = 0; c < d; ++c) gp[c] += a0 * q[r * d + c];
          if (gz)
            for (std::size_t j = 0; j < m; ++j) {
              const double aj = k * pr[j + 1];
              for (std::size_t c = 0; c < d; ++c) gz[j * d + c] += aj * q[r * d + c];
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Gradient checking

GradReport grad_check(const LossFn& loss_fn, std::span<Tensor> inputs,
                      double step) {
  require(step > 0.0, Errc::argument, "grad_check: step must be positive");
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor loss = loss_fn(inputs);
  require(loss.numel() == 1, Errc::contract,
          "grad_check: loss must be scalar, got " + shape_str(loss.shape()));
  const double f0 = loss.item();
  loss.backward();

  auto eval = [&]() { return loss_fn(inputs).item(); };

  GradReport report;
  std::size_t flat = 0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto x = t.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i, ++flat) {
      const double orig = x[i];
      x[i] = orig + step;
      const double fp = eval();
      x[i] = orig - step;
      const double fm = eval();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);

      // A kink or jump shows up as one-sided slopes that disagree and keep
      // disagreeing when the step is halved; smooth curvature halves instead.
      const double jump = std::abs((fp - f0) / step - (f0 - fm) / step);
      if (jump > 1e-6 * std::max(1.0, std::abs(numeric))) {
        const double h2 = step / 2.0;
        x[i] = orig + h2;
        const double fp2 = eval();
        x[i] = orig - h2;
        const double fm2 = eval();
        x[i] = orig;
        const double jump2 = std::abs((fp2 - f0) / h2 - (f0 - fm2) / h2);
        if (jump2 > 0.75 * jump) {
          report.nonsmooth.push_back(flat);
          continue;
        }
      }

      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = ti;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace fbr
