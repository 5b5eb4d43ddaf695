// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hclab::ad {

std::size_t numel(const Shape& shape) {
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

SingularMatrixError::SingularMatrixError(std::size_t pivot_index,
                                         double pivot_value)
    : std::runtime_error("singular matrix: pivot " +
                         std::to_string(pivot_index) + " has magnitude " +
                         std::to_string(std::abs(pivot_value))),
      pivot_index_(pivot_index) {}

Buffer& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " needs " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = shape();
  node->value = node_->value;
  return Tensor(std::move(node));
}

bool Tensor::all_finite() const {
  return std::all_of(node_->value.begin(), node_->value.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace {

double max_relative_error(const std::function<Tensor()>& f,
                          std::span<const Tensor> inputs, double eps) {
  if (eps < 1e-7 || eps > 1e-4) {
    throw std::invalid_argument("grad_check eps must lie in [1e-7, 1e-4]");
  }
  for (const Tensor& x : inputs) {
    x.node()->grad.clear();
    x.node()->requires_grad = true;
  }
  Tensor y = f();
  if (y.size() != 1) {
    throw ShapeError("grad_check needs a scalar function, got " +
                     shape_str(y.shape()));
  }
  y.backward();

  double worst = 0.0;
  for (const Tensor& x : inputs) {
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto& values = x.node()->value;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = f().item();
      values[i] = saved - eps;
      const double minus = f().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  std::vector<Tensor> inputs{x};
  return max_relative_error([&] { return f(x); }, inputs, eps);
}

double grad_check(const std::function<Tensor()>& f,
                  std::span<const Tensor> inputs, double eps) {
  return max_relative_error(f, inputs, eps);
}

}  // namespace hclab::ad
