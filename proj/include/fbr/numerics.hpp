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

// Dense double-precision tensors with a reverse-mode differentiation record.
//
// A Tensor is a cheap handle onto a shared node. Operations whose inputs all
// have requires_grad() == false produce plain constants with no history, so
// inference code pays nothing for the graph.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fbr {

using Shape = std::vector<std::size_t>;
using Vec = std::vector<double>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access; meant for leaves (parameter updates, perturbation).
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse sweep from a scalar. Leaf gradients accumulate across calls.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  friend Tensor make_op_result(
      Shape, std::vector<double>, std::vector<Tensor>,
      std::function<void(std::span<const double>, std::span<Tensor>)>);

  std::shared_ptr<detail::Node> node_;
};

// Adds `contribution` into the gradient buffer of `t` (allocating it).
void accumulate_grad(const Tensor& t, std::span<const double> contribution);
// Mutable gradient buffer of a tensor that requires grad, allocated on demand.
std::span<double> grad_buffer(const Tensor& t);

// Builds an op output. `backward` receives the output gradient and the inputs,
// and accumulates into the inputs that require grad. When no input requires
// grad the history is dropped. Throws Errc::numeric on non-finite values.
Tensor make_op_result(
    Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
    std::function<void(std::span<const double>, std::span<Tensor>)> backward);

// ---------------------------------------------------------------------------
// Plain vector kernels.

// Max-subtracted softmax. Empty input is an argument error.
Vec softmax(std::span<const double> v);
// Zero-norm input is a degenerate-input error.
double cosine_sim(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
Vec normalized(std::span<const double> a);

// ---------------------------------------------------------------------------
// Differentiable operations.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Picks entries by flat index; output has `shape` (numel == indices.size()).
Tensor gather(const Tensor& a, std::vector<std::size_t> indices, Shape shape);

// x[n, in] * w[out, in]^T + b[out] -> [n, out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// 2-D convolution, x[B, Cin, H, W], w[Cout, Cin, k, k], bias[Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad);

// Per-pixel affine map over channels: x[B, Cin, H, W] -> [B, Cout, H, W].
// `bias` may be undefined.
Tensor pointwise_linear(const Tensor& x, const Tensor& weight,
                        const Tensor& bias);

// Per (image, channel) mean of the entries strictly above `threshold`;
// the plain spatial mean when none qualifies. x[B, C, H, W] -> [B, C].
// The threshold mask is a constant: gradients only reach the pooled entries.
Tensor thresholded_avg_pool(const Tensor& x, double threshold);

// Per-channel normalization over batch and space, no affine part.
Tensor batch_norm(const Tensor& x, double eps = 1e-5);

// Rows of x[n, D] scaled to unit l2 norm. Zero rows are a degenerate error.
Tensor l2_normalize_rows(const Tensor& x);

// sum_i w_i x_i / sum_i w_i over rows of x[n, D], w[n] -> [D].
Tensor weighted_mean_rows(const Tensor& x, const Tensor& weights);

// Mean binary cross-entropy of logits against {0,1} targets (same numel).
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
// Mean binary cross-entropy of probabilities clipped to [eps, 1 - eps].
Tensor binary_cross_entropy(const Tensor& probs,
                            std::span<const double> targets,
                            double eps = 1e-7);

// Sum over queries q (rows of queries[n, D]) of
//   -log( e^{q.p/tau} / (e^{q.p/tau} + sum_z e^{q.z/tau}) ),
// log-sum-exp stabilized. negatives[m, D] may have m == 0.
Tensor info_nce_sum(const Tensor& queries, const Tensor& positive,
                    const Tensor& negatives, double tau);

// ---------------------------------------------------------------------------
// Gradient checking.

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  // Coordinates where one-sided differences disagree and keep disagreeing
  // as the step shrinks; excluded from max_rel_error.
  std::vector<std::size_t> nonsmooth;
  bool flagged_nonsmooth() const { return !nonsmooth.empty(); }
};

using LossFn = std::function<Tensor(std::span<const Tensor>)>;

// Compares reverse-mode gradients of a scalar loss with central differences
// for every entry of every input. Inputs must be leaves; their values are
// perturbed in place and restored. Non-scalar loss is a contract error.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradReport grad_check(const LossFn& loss_fn, std::span<Tensor> inputs,
                      double step = 1e-4);

}  // namespace fbr
