// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Residual-stream connection variants. Each token carries n parallel streams
// X_t (n x C); a layer updates them as
//
//   X'_t = H_res,t X_t + H_post,t^T F(H_pre X)_t
//
// where F is the attention or MLP branch run over the whole sequence and the
// three mappings are generated per token from the RMS-normalized, flattened
// streams.

#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hclab/autodiff.hpp"
#include "hclab/manifold.hpp"

namespace hclab {

enum class Variant { kRc, kHc, kMhc, kMhcLite, kShc };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
std::vector<Variant> all_variants();

struct NamedParam {
  std::string name;
  ad::Tensor tensor;
  bool decay = false;      // AdamW weight decay applies
  bool hc_weight = false;  // a hyper-connection projection matrix
};

struct StreamState {
  ad::Tensor values;  // [T, n, C]

  std::size_t tokens() const { return values.dim(0); }
  std::size_t streams() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(2); }
};

struct MixBundle {
  ad::Tensor h_pre;   // [T, 1, n]
  ad::Tensor h_post;  // [T, 1, n]
  ad::Tensor h_res;   // [T, n, n]
};

// Learnable mapping generators of one hyper-connection site. Which tensors
// are populated depends on the variant; RC has none.
struct VariantParams {
  Variant variant = Variant::kRc;
  std::size_t streams = 1;
  std::size_t channels = 0;

  ad::Tensor norm_gain;  // [nC]
  ad::Tensor w_pre, w_post;  // [nC, n]
  ad::Tensor b_pre, b_post;  // [n]
  ad::Tensor alpha_pre, alpha_post;

  // hc / mhc: w_res [nC, n^2], b_res [n, n]; mhc_lite: [nC, n!], [n!]
  ad::Tensor w_res, b_res, alpha_res;

  // shc, with m = n-1 and k = m(m-1)/2
  ad::Tensor w_u, w_v;  // [nC, k]
  ad::Tensor w_s;       // [nC, m]
  ad::Tensor b_u, b_v;  // [k]
  ad::Tensor b_s;       // [m]
  ad::Tensor tau_u, tau_v, tau_s, gamma_u, gamma_v;

  // Zero projections, gates 0.01, biases chosen so the residual mapping
  // starts at (or next to) the identity.
  static VariantParams init(Variant variant, std::size_t streams,
                            std::size_t channels);

  std::vector<NamedParam> parameters(const std::string& prefix) const;
};

// Adds N(0, stddev^2) noise to every parameter entry in place, drawn in
// parameters() order. Used to move a layer away from its initialization.
void perturb_params(VariantParams& params, std::mt19937_64& rng, double stddev);

// Per-n constants shared by every layer.
struct ResidualConstants {
  manifold::ManifoldConstants manifold;
  ad::Tensor uniform;        // [n, n]
  ad::Tensor helmert;        // [n, n-1]
  ad::Tensor core_identity;  // [n-1, n-1]

  static const ResidualConstants& get(std::size_t n);
  // [n!, n*n] stacked permutation matrices; n <= 8.
  static const ad::Tensor& bvn_stacked(std::size_t n);
};

struct SharedMix {
  ad::Tensor x_norm;  // [T, nC]
  ad::Tensor h_pre;   // [T, n]
  ad::Tensor h_post;  // [T, n]
};

SharedMix gen_shared(const ad::Tensor& x_flat, const VariantParams& params);
ad::Tensor gen_res_hc(const ad::Tensor& x_norm, const VariantParams& params);
ad::Tensor gen_res_mhc(const ad::Tensor& x_norm, const VariantParams& params,
                       int sk_iters = manifold::kDefaultSinkhornIters);
ad::Tensor gen_res_mhclite(const ad::Tensor& x_norm, const VariantParams& params);
ad::Tensor gen_res_shc(const ad::Tensor& x_norm, const VariantParams& params);

// Full bundle for the current streams. RC yields the fixed all-ones bundle.
MixBundle generate_bundle(const StreamState& x, const VariantParams& params,
                          int sk_iters = manifold::kDefaultSinkhornIters);
MixBundle constant_bundle(std::size_t tokens, const manifold::Mat& h_res,
                          const std::vector<double>& h_pre,
                          const std::vector<double>& h_post);

using Branch = std::function<ad::Tensor(const ad::Tensor&)>;

// If `mixed` is non-null it receives H_res X (the streams after mixing).
StreamState hyper_step(const StreamState& x, const Branch& branch,
                       const MixBundle& bundle, ad::Tensor* mixed = nullptr);

StreamState expand_streams(const ad::Tensor& x, std::size_t n);
ad::Tensor collapse_streams(const StreamState& x);

// Token t's n x n slice of a [T, n, n] tensor.
manifold::Mat token_matrix(const ad::Tensor& h, std::size_t t);

}  // namespace hclab
