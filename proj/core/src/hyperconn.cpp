// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/hyperconn.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace hclab {
namespace {

using ad::Shape;
using ad::Tensor;

constexpr double kGateInit = 0.01;
constexpr double kOffDiagLogit = -8.0;
constexpr double kSigmaBiasInit = 4.0;

std::size_t factorial(std::size_t n) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

Tensor one_hot_bias(std::size_t n) {
  std::vector<double> b(n, -1.0);
  b[0] = 1.0;
  return Tensor::from({n}, std::move(b), true);
}

Tensor to_tensor(const manifold::Mat& m) {
  std::vector<double> v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  }
  return Tensor::from({static_cast<std::size_t>(m.rows()),
                       static_cast<std::size_t>(m.cols())},
                      std::move(v));
}

// alpha * (x_norm W) + b
Tensor gated_projection(const Tensor& x_norm, const Tensor& w,
                        const Tensor& gate, const Tensor& bias) {
  return ad::add(ad::mul(ad::matmul(x_norm, w), gate), bias);
}

void require_variant(const VariantParams& p, Variant v, const char* fn) {
  if (p.variant != v) {
    throw std::invalid_argument(std::string(fn) + " called with variant " +
                                std::string(variant_name(p.variant)));
  }
}

// Orthogonal core from k activated outputs per token: Cayley(skew(gamma * a)).
Tensor orthogonal_core(const Tensor& activated, const Tensor& gamma,
                       std::size_t tokens, std::size_t m,
                       const ResidualConstants& consts) {
  if (m * (m - 1) / 2 == 0) {
    return Tensor::full({tokens, m, m}, 1.0);
  }
  const Tensor skew = ad::skew_from_upper(ad::mul(activated, gamma), m);
  const Tensor& eye = consts.core_identity;
  return ad::matmul(ad::sub(eye, skew), ad::inverse(ad::add(skew, eye)));
}

#ifndef NDEBUG
void check_membership(const Tensor& h, manifold::MatrixSet set, double tol) {
  for (std::size_t t = 0; t < h.dim(0); ++t) {
    const auto report = manifold::membership(token_matrix(h, t), set, tol);
    if (!report.member) {
      throw std::logic_error("residual mapping left its set: violation " +
                             std::to_string(report.max_violation));
    }
  }
}
#endif

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kRc: return "rc";
    case Variant::kHc: return "hc";
    case Variant::kMhc: return "mhc";
    case Variant::kMhcLite: return "mhc_lite";
    case Variant::kShc: return "shc";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  if (name == "mhc-lite") return Variant::kMhcLite;
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected rc, hc, mhc, mhc_lite, shc)");
}

std::vector<Variant> all_variants() {
  return {Variant::kRc, Variant::kHc, Variant::kMhc, Variant::kMhcLite,
          Variant::kShc};
}

VariantParams VariantParams::init(Variant variant, std::size_t n,
                                  std::size_t c) {
  VariantParams p;
  p.variant = variant;
  p.streams = n;
  p.channels = c;
  if (variant == Variant::kRc) {
    p.streams = 1;
    return p;
  }
  if (n < 2) {
    throw std::invalid_argument("hyper-connection variants need n >= 2");
  }
  const std::size_t nc = n * c;
  p.norm_gain = Tensor::full({nc}, 1.0, true);
  p.w_pre = Tensor::zeros({nc, n}, true);
  p.w_post = Tensor::zeros({nc, n}, true);
  p.b_pre = one_hot_bias(n);
  p.b_post = one_hot_bias(n);
  p.alpha_pre = Tensor::scalar(kGateInit, true);
  p.alpha_post = Tensor::scalar(kGateInit, true);

  switch (variant) {
    case Variant::kHc: {
      p.w_res = Tensor::zeros({nc, n * n}, true);
      std::vector<double> b(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) b[i * n + i] = 1.0;
      p.b_res = Tensor::from({n, n}, std::move(b), true);
      p.alpha_res = Tensor::scalar(kGateInit, true);
      break;
    }
    case Variant::kMhc: {
      p.w_res = Tensor::zeros({nc, n * n}, true);
      std::vector<double> b(n * n, kOffDiagLogit);
      for (std::size_t i = 0; i < n; ++i) b[i * n + i] = 0.0;
      p.b_res = Tensor::from({n, n}, std::move(b), true);
      p.alpha_res = Tensor::scalar(kGateInit, true);
      break;
    }
    case Variant::kMhcLite: {
      if (n > manifold::kMaxBvnStreams) {
        throw manifold::CapacityError("mhc_lite supports n <= 8");
      }
      const std::size_t perms = factorial(n);
      p.w_res = Tensor::zeros({nc, perms}, true);
      std::vector<double> b(perms, kOffDiagLogit);
      b[0] = 0.0;  // identity is first in lexicographic order
      p.b_res = Tensor::from({perms}, std::move(b), true);
      p.alpha_res = Tensor::scalar(kGateInit, true);
      break;
    }
    case Variant::kShc: {
      const std::size_t m = n - 1;
      const std::size_t k = m * (m - 1) / 2;
      p.w_u = Tensor::zeros({nc, k}, true);
      p.w_v = Tensor::zeros({nc, k}, true);
      p.w_s = Tensor::zeros({nc, m}, true);
      p.b_u = Tensor::zeros({k}, true);
      p.b_v = Tensor::zeros({k}, true);
      p.b_s = Tensor::full({m}, kSigmaBiasInit, true);
      p.tau_u = Tensor::scalar(kGateInit, true);
      p.tau_v = Tensor::scalar(kGateInit, true);
      p.tau_s = Tensor::scalar(kGateInit, true);
      p.gamma_u = Tensor::scalar(1.0, true);
      p.gamma_v = Tensor::scalar(1.0, true);
      break;
    }
    case Variant::kRc:
      break;
  }
  return p;
}

std::vector<NamedParam> VariantParams::parameters(const std::string& prefix) const {
  std::vector<NamedParam> out;
  auto push = [&](const char* name, const Tensor& t, bool weight) {
    if (t.defined()) out.push_back({prefix + name, t, weight, weight});
  };
  push("norm_gain", norm_gain, false);
  push("w_pre", w_pre, true);
  push("w_post", w_post, true);
  push("b_pre", b_pre, false);
  push("b_post", b_post, false);
  push("alpha_pre", alpha_pre, false);
  push("alpha_post", alpha_post, false);
  push("w_res", w_res, true);
  push("b_res", b_res, false);
  push("alpha_res", alpha_res, false);
  push("w_u", w_u, true);
  push("w_v", w_v, true);
  push("w_s", w_s, true);
  push("b_u", b_u, false);
  push("b_v", b_v, false);
  push("b_s", b_s, false);
  push("tau_u", tau_u, false);
  push("tau_v", tau_v, false);
  push("tau_s", tau_s, false);
  push("gamma_u", gamma_u, false);
  push("gamma_v", gamma_v, false);
  return out;
}

void perturb_params(VariantParams& params, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (NamedParam& np : params.parameters("")) {
    for (double& x : np.tensor.mutable_data()) x += dist(rng);
  }
}

const ResidualConstants& ResidualConstants::get(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<ResidualConstants>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    auto c = std::make_unique<ResidualConstants>();
    c->manifold = manifold::ManifoldConstants::make(n);
    c->uniform = to_tensor(c->manifold.uniform);
    c->helmert = to_tensor(c->manifold.helmert);
    c->core_identity = to_tensor(manifold::Mat::Identity(n - 1, n - 1));
    slot = std::move(c);
  }
  return *slot;
}

const ad::Tensor& ResidualConstants::bvn_stacked(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, Tensor> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, to_tensor(manifold::BvnBasis::make(n).stacked())).first;
  }
  return it->second;
}

SharedMix gen_shared(const Tensor& x_flat, const VariantParams& p) {
  if (p.variant == Variant::kRc) {
    throw std::invalid_argument("gen_shared is undefined for rc");
  }
  const std::size_t nc = p.streams * p.channels;
  if (x_flat.rank() != 2 || x_flat.dim(1) != nc) {
    throw ad::ShapeError("gen_shared: input " + ad::shape_str(x_flat.shape()) +
                         " does not match nC=" + std::to_string(nc));
  }
  SharedMix mix;
  mix.x_norm = ad::rmsnorm(x_flat, p.norm_gain);
  mix.h_pre = ad::sigmoid(gated_projection(mix.x_norm, p.w_pre, p.alpha_pre, p.b_pre));
  mix.h_post = ad::scale(
      ad::sigmoid(gated_projection(mix.x_norm, p.w_post, p.alpha_post, p.b_post)), 2.0);
  return mix;
}

Tensor gen_res_hc(const Tensor& x_norm, const VariantParams& p) {
  require_variant(p, Variant::kHc, "gen_res_hc");
  const std::size_t n = p.streams;
  const Tensor raw = ad::mul(ad::matmul(x_norm, p.w_res), p.alpha_res);
  return ad::add(ad::reshape(raw, {x_norm.dim(0), n, n}), p.b_res);
}

Tensor gen_res_mhc(const Tensor& x_norm, const VariantParams& p, int sk_iters) {
  require_variant(p, Variant::kMhc, "gen_res_mhc");
  if (sk_iters < 1) throw std::invalid_argument("sk_iters must be >= 1");
  const std::size_t n = p.streams;
  const Tensor raw = ad::mul(ad::matmul(x_norm, p.w_res), p.alpha_res);
  Tensor m = ad::exp(ad::add(ad::reshape(raw, {x_norm.dim(0), n, n}), p.b_res));
  for (int it = 0; it < sk_iters; ++it) {
    m = ad::normalize_sum(m, -1);
    m = ad::normalize_sum(m, -2);
  }
  return m;
}

Tensor gen_res_mhclite(const Tensor& x_norm, const VariantParams& p) {
  require_variant(p, Variant::kMhcLite, "gen_res_mhclite");
  const std::size_t n = p.streams;
  if (n > manifold::kMaxBvnStreams) {
    throw manifold::CapacityError("mhc_lite supports n <= 8");
  }
  const Tensor coeffs =
      ad::softmax(gated_projection(x_norm, p.w_res, p.alpha_res, p.b_res), -1);
  const Tensor flat = ad::matmul(coeffs, ResidualConstants::bvn_stacked(n));
  Tensor h = ad::reshape(flat, {x_norm.dim(0), n, n});
#ifndef NDEBUG
  check_membership(h, manifold::MatrixSet::kBirkhoff, 1e-12);
#endif
  return h;
}

Tensor gen_res_shc(const Tensor& x_norm, const VariantParams& p) {
  require_variant(p, Variant::kShc, "gen_res_shc");
  const std::size_t n = p.streams;
  const std::size_t m = n - 1;
  const std::size_t tokens = x_norm.dim(0);
  const ResidualConstants& consts = ResidualConstants::get(n);

  Tensor u_core, v_core;
  if (m * (m - 1) / 2 == 0) {
    u_core = v_core = orthogonal_core({}, {}, tokens, m, consts);
  } else {
    const Tensor a_u = ad::tanh(gated_projection(x_norm, p.w_u, p.tau_u, p.b_u));
    const Tensor a_v = ad::tanh(gated_projection(x_norm, p.w_v, p.tau_v, p.b_v));
    u_core = orthogonal_core(a_u, p.gamma_u, tokens, m, consts);
    v_core = orthogonal_core(a_v, p.gamma_v, tokens, m, consts);
  }
  const Tensor sigma = ad::tanh(gated_projection(x_norm, p.w_s, p.tau_s, p.b_s));

  const Tensor u = ad::matmul(consts.helmert, u_core);  // [T, n, m]
  const Tensor v = ad::matmul(consts.helmert, v_core);
  const Tensor disp = ad::matmul(ad::matmul(u, ad::diag_embed(sigma)), ad::transpose(v));
  Tensor h = ad::add(disp, consts.uniform);
#ifndef NDEBUG
  check_membership(h, manifold::MatrixSet::kSphere, 1e-9);
#endif
  return h;
}

MixBundle constant_bundle(std::size_t tokens, const manifold::Mat& h_res,
                          const std::vector<double>& h_pre,
                          const std::vector<double>& h_post) {
  const std::size_t n = static_cast<std::size_t>(h_res.rows());
  std::vector<double> pre(tokens * n), post(tokens * n), res(tokens * n * n);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      pre[t * n + i] = h_pre.at(i);
      post[t * n + i] = h_post.at(i);
      for (std::size_t j = 0; j < n; ++j) res[(t * n + i) * n + j] = h_res(i, j);
    }
  }
  return {Tensor::from({tokens, 1, n}, std::move(pre)),
          Tensor::from({tokens, 1, n}, std::move(post)),
          Tensor::from({tokens, n, n}, std::move(res))};
}

MixBundle generate_bundle(const StreamState& x, const VariantParams& p,
                          int sk_iters) {
  const std::size_t tokens = x.tokens();
  const std::size_t n = x.streams();
  if (n != p.streams) {
    throw ad::ShapeError("stream state has " + std::to_string(n) +
                         " streams, layer expects " + std::to_string(p.streams));
  }
  if (p.variant == Variant::kRc) {
    return constant_bundle(tokens, manifold::Mat::Identity(1, 1), {1.0}, {1.0});
  }
  const Tensor flat = ad::reshape(x.values, {tokens, n * x.channels()});
  const SharedMix shared = gen_shared(flat, p);
  Tensor res;
  switch (p.variant) {
    case Variant::kHc: res = gen_res_hc(shared.x_norm, p); break;
    case Variant::kMhc: res = gen_res_mhc(shared.x_norm, p, sk_iters); break;
    case Variant::kMhcLite: res = gen_res_mhclite(shared.x_norm, p); break;
    case Variant::kShc: res = gen_res_shc(shared.x_norm, p); break;
    case Variant::kRc: break;
  }
  return {ad::reshape(shared.h_pre, {tokens, 1, n}),
          ad::reshape(shared.h_post, {tokens, 1, n}), res};
}

StreamState hyper_step(const StreamState& x, const Branch& branch,
                       const MixBundle& bundle, Tensor* mixed) {
  const std::size_t tokens = x.tokens(), n = x.streams(), c = x.channels();
  const Shape vec_shape{tokens, 1, n};
  const Shape res_shape{tokens, n, n};
  if (bundle.h_pre.shape() != vec_shape || bundle.h_post.shape() != vec_shape ||
      bundle.h_res.shape() != res_shape) {
    throw ad::ShapeError("hyper_step: bundle " + ad::shape_str(bundle.h_res.shape()) +
                         " does not match streams " + ad::shape_str(x.values.shape()));
  }
  const Tensor branch_in = ad::reshape(ad::matmul(bundle.h_pre, x.values), {tokens, c});
  const Tensor f = branch(branch_in);
  if (f.shape() != Shape{tokens, c}) {
    throw ad::ShapeError("hyper_step: branch returned " + ad::shape_str(f.shape()) +
                         ", expected " + ad::shape_str({tokens, c}));
  }
  Tensor mix = ad::matmul(bundle.h_res, x.values);
  const Tensor spread =
      ad::matmul(ad::transpose(bundle.h_post), ad::reshape(f, {tokens, 1, c}));
  StreamState out{ad::add(mix, spread)};
  if (mixed) *mixed = std::move(mix);
  return out;
}

StreamState expand_streams(const Tensor& x, std::size_t n) {
  return {ad::replicate_streams(x, n)};
}

Tensor collapse_streams(const StreamState& x) { return ad::mean_streams(x.values); }

manifold::Mat token_matrix(const Tensor& h, std::size_t t) {
  const std::size_t r = h.dim(1), c = h.dim(2);
  manifold::Mat m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) m(i, j) = h[(t * r + i) * c + j];
  }
  return m;
}

}  // namespace hclab
