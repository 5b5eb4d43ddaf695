// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hclab/autodiff.hpp"

namespace hclab::ad {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Builds the result node; history is kept only if some parent needs grads.
template <typename Backward>
Tensor record(Shape shape, Buffer value,
              std::initializer_list<Tensor> parents, const char* op,
              Backward&& backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    for (const Tensor& p : parents) {
      if (p.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::forward<Backward>(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of a parent, or nullptr if it does not track gradients.
double* grad_of(Node* n) {
  return n->requires_grad ? n->grad_buffer().data() : nullptr;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (numel(small) == 1) return true;
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - small.size());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  const bool a_big = a.size() > b.size() ||
                     (a.size() == b.size() && a.rank() >= b.rank());
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  if (!is_suffix(small.shape(), big.shape())) {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return big.shape();
}

// Batched products in this library are per-token n x n mixes, far below the
// size where a blocked GEMM pays off.

// C[m,p] = A[m,k] B[k,p]
void small_gemm(const double* A, const double* B, double* C, std::size_t m,
                std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * p;
    std::fill(c, c + p, 0.0);
    for (std::size_t l = 0; l < k; ++l) {
      const double a = A[i * k + l];
      const double* b = B + l * p;
      for (std::size_t j = 0; j < p; ++j) c[j] += a * b[j];
    }
  }
}

// C[m,k] += G[m,p] B[k,p]^T
void small_gemm_nt(const double* G, const double* B, double* C, std::size_t m,
                   std::size_t p, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += G[i * p + j] * B[l * p + j];
      C[i * k + l] += acc;
    }
  }
}

// C[k,p] += A[m,k]^T G[m,p]
void small_gemm_tn(const double* A, const double* G, double* C, std::size_t m,
                   std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double a = A[i * k + l];
      double* c = C + l * p;
      const double* g = G + i * p;
      for (std::size_t j = 0; j < p; ++j) c[j] += a * g[j];
    }
  }
}

enum class BinOp { kAdd, kSub, kMul };

// Visits (i, i mod na, i mod nb) for i < n in blocks, where one of na, nb
// equals n and the other divides it. A size-1 operand is passed as one block.
template <typename F>
void for_each_broadcast(std::size_t n, std::size_t na, std::size_t nb, F&& f) {
  if ((na == n && nb == n) || na == 1 || nb == 1) {
    f(0, 0, 0, n);
    return;
  }
  const std::size_t period = std::min(na, nb);
  for (std::size_t o = 0; o < n; o += period) {
    f(o, na == n ? o : 0, nb == n ? o : 0, period);
  }
}

template <BinOp kind>
void binary_forward(const double* a, const double* b, double* out, std::size_t n,
                    std::size_t na, std::size_t nb) {
  for_each_broadcast(n, na, nb, [&](std::size_t o, std::size_t ia, std::size_t ib,
                                    std::size_t len) {
    const double* x = a + ia;
    const double* y = b + ib;
    double* z = out + o;
    if (na == 1) {
      for (std::size_t j = 0; j < len; ++j) {
        z[j] = kind == BinOp::kAdd ? a[0] + y[j] : kind == BinOp::kSub ? a[0] - y[j] : a[0] * y[j];
      }
    } else if (nb == 1) {
      for (std::size_t j = 0; j < len; ++j) {
        z[j] = kind == BinOp::kAdd ? x[j] + b[0] : kind == BinOp::kSub ? x[j] - b[0] : x[j] * b[0];
      }
    } else {
      for (std::size_t j = 0; j < len; ++j) {
        z[j] = kind == BinOp::kAdd ? x[j] + y[j] : kind == BinOp::kSub ? x[j] - y[j] : x[j] * y[j];
      }
    }
  });
}

template <BinOp kind>
void binary_backward(const double* g, const Node* pa, const Node* pb, double* ga,
                     double* gb, std::size_t n, std::size_t na, std::size_t nb) {
  const double* av = pa->value.data();
  const double* bv = pb->value.data();
  for_each_broadcast(n, na, nb, [&](std::size_t o, std::size_t ia, std::size_t ib,
                                    std::size_t len) {
    const double* go = g + o;
    const bool a_scalar = na == 1 && n > 1;
    const bool b_scalar = nb == 1 && n > 1;
    if (ga) {
      double* dst = ga + ia;
      if (a_scalar) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          acc += kind == BinOp::kMul ? go[j] * bv[ib + j] : go[j];
        }
        dst[0] += acc;
      } else {
        for (std::size_t j = 0; j < len; ++j) {
          dst[j] += kind == BinOp::kMul ? go[j] * bv[b_scalar ? 0 : ib + j] : go[j];
        }
      }
    }
    if (gb) {
      double* dst = gb + ib;
      const double sign = kind == BinOp::kSub ? -1.0 : 1.0;
      if (b_scalar) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          acc += kind == BinOp::kMul ? go[j] * av[ia + j] : go[j];
        }
        dst[0] += sign * acc;
      } else {
        for (std::size_t j = 0; j < len; ++j) {
          dst[j] += kind == BinOp::kMul ? go[j] * av[a_scalar ? 0 : ia + j] : sign * go[j];
        }
      }
    }
  });
}

template <BinOp kind>
Tensor binary(const Tensor& a, const Tensor& b, const char* name) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = numel(shape);
  const std::size_t na = a.size(), nb = b.size();
  Buffer out(n);
  binary_forward<kind>(a.data().data(), b.data().data(), out.data(), n, na, nb);
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(std::move(shape), std::move(out), {a, b}, name,
                [pa, pb, na, nb](Node& self) {
                  binary_backward<kind>(self.grad.data(), pa, pb, grad_of(pa), grad_of(pb),
                                        self.grad.size(), na, nb);
                });
}

// Unary op whose derivative is a function of (input, output).
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* name, F&& f, D&& dfdx) {
  const auto xv = x.data();
  Buffer out(xv.size());
  std::transform(xv.begin(), xv.end(), out.begin(), f);
  Node* px = x.node().get();
  return record(x.shape(), std::move(out), {x}, name,
                [px, dfdx](Node& self) {
                  double* gx = grad_of(px);
                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    gx[i] += self.grad[i] * dfdx(px->value[i], self.value[i]);
                  }
                });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], p = sb.back();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  const bool shared_a = batch_a.empty(), shared_b = batch_b.empty();
  if (k != kb || (!shared_a && !shared_b && batch_a != batch_b)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(sa) + " x " +
                     shape_str(sb));
  }
  Shape out_shape = shared_a ? batch_b : batch_a;
  const std::size_t batch = numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(p);

  Buffer out(batch * m * p);
  const double* A = a.data().data();
  const double* B = b.data().data();
  if (shared_b) {
    // Fold the batch into the row dimension: one GEMM.
    MutMap(out.data(), batch * m, p).noalias() =
        ConstMap(A, batch * m, k) * ConstMap(B, k, p);
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      small_gemm(shared_a ? A : A + t * m * k, B + t * k * p, out.data() + t * m * p,
                 m, k, p);
    }
  }

  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(std::move(out_shape), std::move(out), {a, b}, "matmul",
                [pa, pb, batch, m, k, p, shared_a, shared_b](Node& self) {
                  double* ga = grad_of(pa);
                  double* gb = grad_of(pb);
                  const double* G = self.grad.data();
                  const double* A = pa->value.data();
                  const double* B = pb->value.data();
                  if (shared_b) {
                    ConstMap Gf(G, batch * m, p);
                    if (ga) {
                      MutMap(ga, batch * m, k).noalias() +=
                          Gf * ConstMap(B, k, p).transpose();
                    }
                    if (gb) {
                      MutMap(gb, k, p).noalias() +=
                          ConstMap(A, batch * m, k).transpose() * Gf;
                    }
                    return;
                  }
                  for (std::size_t t = 0; t < batch; ++t) {
                    const double* Gt = G + t * m * p;
                    const std::size_t ao = shared_a ? 0 : t * m * k;
                    if (ga) small_gemm_nt(Gt, B + t * k * p, ga + ao, m, p, k);
                    if (gb) small_gemm_tn(A + ao, Gt, gb + t * k * p, m, k, p);
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary<BinOp::kAdd>(a, b, "add");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary<BinOp::kSub>(a, b, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary<BinOp::kMul>(a, b, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), ax);
  if (s.len == 0) throw ShapeError("softmax over an empty axis");
  const auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  Node* px = x.node().get();
  return record(x.shape(), std::move(out), {x}, "softmax", [px, s](Node& self) {
    double* gx = grad_of(px);
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t i = base + j * s.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t i = base + j * s.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor normalize_sum(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), ax);
  const auto xv = x.data();
  Buffer out(xv.size());
  Buffer sums(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) total += xv[base + j * s.inner];
      sums[o * s.inner + in] = total;
      for (std::size_t j = 0; j < s.len; ++j) {
        out[base + j * s.inner] = xv[base + j * s.inner] / total;
      }
    }
  }
  Node* px = x.node().get();
  return record(x.shape(), std::move(out), {x}, "normalize_sum",
                [px, s, sums = std::move(sums)](Node& self) {
                  double* gx = grad_of(px);
                  const auto& y = self.value;
                  const auto& g = self.grad;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t in = 0; in < s.inner; ++in) {
                      const std::size_t base = o * s.len * s.inner + in;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < s.len; ++j) {
                        const std::size_t i = base + j * s.inner;
                        dot += g[i] * y[i];
                      }
                      const double inv = 1.0 / sums[o * s.inner + in];
                      for (std::size_t j = 0; j < s.len; ++j) {
                        const std::size_t i = base + j * s.inner;
                        gx[i] += (g[i] - dot) * inv;
                      }
                    }
                  }
                });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  if (x.rank() == 0 || gain.size() != x.shape().back()) {
    throw ShapeError("rmsnorm: gain " + shape_str(gain.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  const auto xv = x.data();
  const auto gv = gain.data();
  Buffer out(xv.size());
  Buffer inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += xv[r * d + j] * xv[r * d + j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    inv_rms[r] = inv;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = gv[j] * xv[r * d + j] * inv;
  }
  Node* px = x.node().get();
  Node* pg = gain.node().get();
  return record(x.shape(), std::move(out), {x, gain}, "rmsnorm",
                [px, pg, d, rows, inv_rms = std::move(inv_rms)](Node& self) {
                  double* gx = grad_of(px);
                  double* gg = grad_of(pg);
                  const auto& xv = px->value;
                  const auto& gv = pg->value;
                  const auto& g = self.grad;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double inv = inv_rms[r];
                    double dot = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const std::size_t i = r * d + j;
                      const double xhat = xv[i] * inv;
                      if (gg) gg[j] += g[i] * xhat;
                      dot += g[i] * gv[j] * xhat;
                    }
                    if (!gx) continue;
                    dot /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                      const std::size_t i = r * d + j;
                      gx[i] += (g[i] * gv[j] - xv[i] * inv * dot) * inv;
                    }
                  }
                });
}

Tensor inverse(const Tensor& a) {
  if (a.rank() < 2 || a.shape().back() != a.shape()[a.rank() - 2]) {
    throw ShapeError("inverse needs square matrices, got " + shape_str(a.shape()));
  }
  const std::size_t m = a.shape().back();
  const std::size_t batch = a.size() / std::max<std::size_t>(1, m * m);
  Buffer out(a.size());
  Buffer work(2 * m * m);
  const std::size_t w = 2 * m;
  for (std::size_t t = 0; t < batch; ++t) {
    const double* src = a.data().data() + t * m * m;
    // Augmented [A | I].
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        work[i * w + j] = src[i * m + j];
        work[i * w + m + j] = i == j ? 1.0 : 0.0;
      }
    }
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < m; ++r) {
        if (std::abs(work[r * w + c]) > std::abs(work[piv * w + c])) piv = r;
      }
      const double pv = work[piv * w + c];
      if (std::abs(pv) < kSingularPivot) throw SingularMatrixError(c, pv);
      if (piv != c) {
        for (std::size_t j = 0; j < w; ++j) std::swap(work[c * w + j], work[piv * w + j]);
      }
      const double inv = 1.0 / pv;
      for (std::size_t j = 0; j < w; ++j) work[c * w + j] *= inv;
      for (std::size_t r = 0; r < m; ++r) {
        if (r == c) continue;
        const double f = work[r * w + c];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < w; ++j) work[r * w + j] -= f * work[c * w + j];
      }
    }
    double* dst = out.data() + t * m * m;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) dst[i * m + j] = work[i * w + m + j];
    }
  }
  Node* pa = a.node().get();
  return record(a.shape(), std::move(out), {a}, "inverse",
                [pa, batch, m](Node& self) {
                  double* ga = grad_of(pa);
                  for (std::size_t t = 0; t < batch; ++t) {
                    ConstMap C(self.value.data() + t * m * m, m, m);
                    ConstMap G(self.grad.data() + t * m * m, m, m);
                    MutMap(ga + t * m * m, m, m).noalias() -=
                        C.transpose() * G * C.transpose();
                  }
                });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  Shape shape = a.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape.back();
  std::swap(shape[shape.size() - 2], shape.back());
  const std::size_t batch = a.size() / std::max<std::size_t>(1, r * c);
  Buffer out(a.size());
  const auto av = a.data();
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[t * r * c + j * r + i] = av[t * r * c + i * c + j];
    }
  }
  Node* pa = a.node().get();
  return record(std::move(shape), std::move(out), {a}, "transpose",
                [pa, batch, r, c](Node& self) {
                  double* ga = grad_of(pa);
                  for (std::size_t t = 0; t < batch; ++t) {
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < c; ++j) {
                        ga[t * r * c + i * c + j] += self.grad[t * r * c + j * r + i];
                      }
                    }
                  }
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Node* pa = a.node().get();
  return record(std::move(shape), Buffer(a.data().begin(), a.data().end()),
                {a}, "reshape", [pa](Node& self) {
                  double* ga = grad_of(pa);
                  for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
                });
}

Tensor skew_from_upper(const Tensor& v, std::size_t m) {
  const std::size_t k = m * (m - 1) / 2;
  if (m == 0 || v.rank() == 0 || v.shape().back() != k) {
    throw ShapeError("skew_from_upper: " + shape_str(v.shape()) + " does not hold " +
                     std::to_string(k) + " entries for m=" + std::to_string(m));
  }
  Shape shape(v.shape().begin(), v.shape().end() - 1);
  const std::size_t batch = numel(shape);
  shape.push_back(m);
  shape.push_back(m);
  Buffer out(batch * m * m, 0.0);
  const auto vv = v.data();
  for (std::size_t t = 0; t < batch; ++t) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j, ++idx) {
        const double x = vv[t * k + idx];
        out[t * m * m + i * m + j] = x;
        out[t * m * m + j * m + i] = -x;
      }
    }
  }
  Node* pv = v.node().get();
  return record(std::move(shape), std::move(out), {v}, "skew_from_upper",
                [pv, batch, m, k](Node& self) {
                  double* gv = grad_of(pv);
                  const auto& g = self.grad;
                  for (std::size_t t = 0; t < batch; ++t) {
                    std::size_t idx = 0;
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = i + 1; j < m; ++j, ++idx) {
                        gv[t * k + idx] += g[t * m * m + i * m + j] - g[t * m * m + j * m + i];
                      }
                    }
                  }
                });
}

Tensor diag_embed(const Tensor& v) {
  if (v.rank() == 0) throw ShapeError("diag_embed needs rank >= 1");
  const std::size_t m = v.shape().back();
  Shape shape = v.shape();
  shape.push_back(m);
  const std::size_t batch = v.size() / std::max<std::size_t>(1, m);
  Buffer out(batch * m * m, 0.0);
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < m; ++i) out[t * m * m + i * m + i] = v[t * m + i];
  }
  Node* pv = v.node().get();
  return record(std::move(shape), std::move(out), {v}, "diag_embed",
                [pv, batch, m](Node& self) {
                  double* gv = grad_of(pv);
                  for (std::size_t t = 0; t < batch; ++t) {
                    for (std::size_t i = 0; i < m; ++i) gv[t * m + i] += self.grad[t * m * m + i * m + i];
                  }
                });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding table must be 2-D");
  const std::size_t vocab = table.dim(0), c = table.dim(1);
  Buffer out(ids.size() * c);
  std::vector<int> saved(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(ids[i]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(table.data().data() + ids[i] * c, c, out.data() + i * c);
  }
  Node* pt = table.node().get();
  return record({ids.size(), c}, std::move(out), {table}, "embedding",
                [pt, c, saved = std::move(saved)](Node& self) {
                  double* gt = grad_of(pt);
                  for (std::size_t i = 0; i < saved.size(); ++i) {
                    for (std::size_t j = 0; j < c; ++j) gt[saved[i] * c + j] += self.grad[i * c + j];
                  }
                });
}

Tensor replicate_streams(const Tensor& x, std::size_t n) {
  if (x.rank() != 2) throw ShapeError("replicate_streams expects [N, C]");
  const std::size_t rows = x.dim(0), c = x.dim(1);
  Buffer out(rows * n * c);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(x.data().data() + r * c, c, out.data() + (r * n + s) * c);
    }
  }
  Node* px = x.node().get();
  return record({rows, n, c}, std::move(out), {x}, "replicate_streams",
                [px, rows, n, c](Node& self) {
                  double* gx = grad_of(px);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t s = 0; s < n; ++s) {
                      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += self.grad[(r * n + s) * c + j];
                    }
                  }
                });
}

Tensor mean_streams(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("mean_streams expects [N, n, C]");
  const std::size_t rows = x.dim(0), n = x.dim(1), c = x.dim(2);
  Buffer out(rows * c, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < c; ++j) out[r * c + j] += x[(r * n + s) * c + j] * inv;
    }
  }
  Node* px = x.node().get();
  return record({rows, c}, std::move(out), {x}, "mean_streams",
                [px, rows, n, c, inv](Node& self) {
                  double* gx = grad_of(px);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t s = 0; s < n; ++s) {
                      for (std::size_t j = 0; j < c; ++j) gx[(r * n + s) * c + j] += self.grad[r * c + j] * inv;
                    }
                  }
                });
}

namespace {

struct AttentionDims {
  std::size_t batch, seq, heads, channels, head_dim;
};

AttentionDims attention_dims(const Tensor& qkv, std::size_t batch, std::size_t seq,
                             std::size_t heads) {
  if (qkv.rank() != 2 || qkv.dim(0) != batch * seq || qkv.dim(1) % 3 != 0) {
    throw ShapeError("causal_attention: qkv " + shape_str(qkv.shape()) +
                     " does not match batch*seq=" + std::to_string(batch * seq));
  }
  const std::size_t c = qkv.dim(1) / 3;
  if (heads == 0 || c % heads != 0) {
    throw ShapeError("causal_attention: channels " + std::to_string(c) +
                     " not divisible by heads " + std::to_string(heads));
  }
  return {batch, seq, heads, c, c / heads};
}

// Fills probs [batch, heads, seq, seq] and out [batch*seq, C].
void attention_forward(const AttentionDims& d, const double* qkv, double* probs,
                       double* out) {
  const std::size_t T = d.seq, hd = d.head_dim, C = d.channels;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  RowMat scores(T, T);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* base = qkv + b * T * 3 * C;
    for (std::size_t h = 0; h < d.heads; ++h) {
      ConstStrided Q(base + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      ConstStrided K(base + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      ConstStrided V(base + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
      scores.noalias() = Q * K.transpose();
      MutMap P(probs + (b * d.heads + h) * T * T, T, T);
      for (std::size_t i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, scores(i, j) * scale);
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double e = std::exp(scores(i, j) * scale - mx);
          P(i, j) = e;
          total += e;
        }
        for (std::size_t j = 0; j <= i; ++j) P(i, j) /= total;
        for (std::size_t j = i + 1; j < T; ++j) P(i, j) = 0.0;
      }
      if (out) {
        MutStrided O(out + b * T * C + h * hd, T, hd, Eigen::OuterStride<>(C));
        O.noalias() = P * V;
      }
    }
  }
}

}  // namespace

Tensor causal_attention(const Tensor& qkv, std::size_t batch, std::size_t seq,
                        std::size_t heads) {
  const AttentionDims d = attention_dims(qkv, batch, seq, heads);
  Buffer probs(batch * heads * seq * seq);
  Buffer out(batch * seq * d.channels);
  attention_forward(d, qkv.data().data(), probs.data(), out.data());
  Node* pq = qkv.node().get();
  return record({batch * seq, d.channels}, std::move(out), {qkv}, "causal_attention",
                [pq, d, probs = std::move(probs)](Node& self) {
                  double* gq = grad_of(pq);
                  const std::size_t T = d.seq, hd = d.head_dim, C = d.channels;
                  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
                  RowMat dP(T, T);
                  for (std::size_t b = 0; b < d.batch; ++b) {
                    const double* base = pq->value.data() + b * T * 3 * C;
                    double* gbase = gq + b * T * 3 * C;
                    for (std::size_t h = 0; h < d.heads; ++h) {
                      ConstStrided Q(base + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      ConstStrided K(base + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      ConstStrided V(base + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      ConstStrided dO(self.grad.data() + b * T * C + h * hd, T, hd,
                                      Eigen::OuterStride<>(C));
                      ConstMap P(probs.data() + (b * d.heads + h) * T * T, T, T);
                      MutStrided dQ(gbase + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      MutStrided dK(gbase + C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      MutStrided dV(gbase + 2 * C + h * hd, T, hd, Eigen::OuterStride<>(3 * C));
                      dV.noalias() += P.transpose() * dO;
                      dP.noalias() = dO * V.transpose();
                      for (std::size_t i = 0; i < T; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j <= i; ++j) dot += dP(i, j) * P(i, j);
                        for (std::size_t j = 0; j <= i; ++j) dP(i, j) = P(i, j) * (dP(i, j) - dot) * scale;
                        for (std::size_t j = i + 1; j < T; ++j) dP(i, j) = 0.0;
                      }
                      dQ.noalias() += dP * K;
                      dK.noalias() += dP.transpose() * Q;
                    }
                  }
                });
}

std::vector<double> causal_attention_probs(const Tensor& qkv, std::size_t batch,
                                           std::size_t seq, std::size_t heads) {
  const AttentionDims d = attention_dims(qkv, batch, seq, heads);
  Buffer probs(batch * heads * seq * seq);
  attention_forward(d, qkv.data().data(), probs.data(), nullptr);
  return {probs.begin(), probs.end()};
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  Buffer probs(logits.size());
  std::vector<int> saved(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw std::out_of_range("target " + std::to_string(targets[r]) + " outside vocabulary");
    }
    const double* row = logits.data().data() + r * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      probs[r * vocab + j] = std::exp(row[j] - mx);
      z += probs[r * vocab + j];
    }
    for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] /= z;
    total += std::log(z) + mx - row[targets[r]];
  }
  Node* pl = logits.node().get();
  return record({1}, {total / static_cast<double>(rows)}, {logits}, "cross_entropy",
                [pl, rows, vocab, probs = std::move(probs), saved = std::move(saved)](Node& self) {
                  double* gl = grad_of(pl);
                  const double g = self.grad[0] / static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < vocab; ++j) gl[r * vocab + j] += g * probs[r * vocab + j];
                    gl[r * vocab + saved[r]] -= g;
                  }
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Node* px = x.node().get();
  return record({1}, {total}, {x}, "sum", [px](Node& self) {
    double* gx = grad_of(px);
    for (std::size_t i = 0; i < px->value.size(); ++i) gx[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(std::max<std::size_t>(1, x.size())));
}

}  // namespace hclab::ad
