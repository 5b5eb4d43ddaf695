// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tensor is a shared handle to a graph node. Leaves created with
// requires_grad=true accumulate gradients when backward() is called on a
// scalar result. Operations whose inputs do not require gradients record
// nothing, so forward-only evaluation builds no graph.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hclab::ad {

using Shape = std::vector<std::size_t>;
// Tensor storage. Eigen kernels pick their vectorized-reduction split from
// the buffer address, so a fixed alignment keeps results bit-reproducible.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(std::size_t pivot_index, double pivot_value);
  std::size_t pivot_index() const { return pivot_index_; }

 private:
  std::size_t pivot_index_;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One entry of the tape. `backward` reads self.grad and accumulates into the
// parents' grads.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Buffer& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse sweep from this scalar. Visits each reachable node exactly once
  // in reverse topological order.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  bool all_finite() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// While alive, operations on this thread record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast the smaller operand when its
// shape is a suffix of the larger one (this includes scalars and bias rows).

// a: [..., m, k], b: [..., k, p]. Batch dims must match, or either side may be
// a plain 2-D matrix shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor gelu(const Tensor& x);

// Max-subtracted softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);

// Divides by the sum along `axis`. Inputs must be positive along the axis.
Tensor normalize_sum(const Tensor& x, int axis);

inline constexpr double kRmsNormEps = 1e-5;
// gain * x / sqrt(mean(x^2) + eps) over the last axis.
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = kRmsNormEps);

// Batched Gauss-Jordan inverse with partial pivoting over the last two axes.
Tensor inverse(const Tensor& a);
inline constexpr double kSingularPivot = 1e-12;

Tensor transpose(const Tensor& a);  // swaps the last two axes
Tensor reshape(const Tensor& a, Shape shape);

// [..., m(m-1)/2] -> [..., m, m]; strict upper triangle filled row-major,
// lower triangle negated.
Tensor skew_from_upper(const Tensor& v, std::size_t m);
// [..., m] -> [..., m, m]
Tensor diag_embed(const Tensor& v);

// table: [V, C] -> [ids.size(), C]
Tensor embedding(const Tensor& table, std::span<const int> ids);
// [N, C] -> [N, n, C]
Tensor replicate_streams(const Tensor& x, std::size_t n);
// [N, n, C] -> [N, C]
Tensor mean_streams(const Tensor& x);

// qkv: [batch*seq, 3C] laid out as [q | k | v]; returns [batch*seq, C].
Tensor causal_attention(const Tensor& qkv, std::size_t batch, std::size_t seq,
                        std::size_t heads);
// Attention probabilities [batch, heads, seq, seq] for inspection.
std::vector<double> causal_attention_probs(const Tensor& qkv, std::size_t batch,
                                           std::size_t seq, std::size_t heads);

// Mean next-token cross-entropy; logits [N, V], one target per row.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---------------------------------------------------------------------------

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central difference| /
// max(1e-8, |central difference|).
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

// Multi-input variant: `f` closes over `inputs`, which are perturbed in place.
double grad_check(const std::function<Tensor()>& f,
                  std::span<const Tensor> inputs, double eps = 1e-5);

}  // namespace hclab::ad
