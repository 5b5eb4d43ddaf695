// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level decoder-only transformer whose residual pathway is one of the
// hyper-connection variants. Every block wraps its attention branch and its
// MLP branch in a separate hyper-connection site, so a model with L blocks
// has 2L sites, each generating its own per-token mappings.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hclab/archive.hpp"
#include "hclab/autodiff.hpp"
#include "hclab/hyperconn.hpp"

namespace hclab {

inline constexpr std::size_t kByteVocab = 256;

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t channels = 128;
  std::size_t streams = 4;
  std::size_t context = 128;
  std::size_t vocab = kByteVocab;
  Variant variant = Variant::kShc;
  int sk_iters = manifold::kDefaultSinkhornIters;
  std::uint64_t seed = 1337;

  // RC always runs a single stream.
  std::size_t effective_streams() const {
    return variant == Variant::kRc ? 1 : streams;
  }
  std::size_t sites() const { return 2 * layers; }
  void validate() const;
};

struct BlockParams {
  ad::Tensor attn_norm;   // [C]
  ad::Tensor w_qkv;       // [C, 3C]
  ad::Tensor w_attn_out;  // [C, C]
  ad::Tensor mlp_norm;    // [C]
  ad::Tensor w_fc;        // [C, 4C]
  ad::Tensor w_mlp_out;   // [4C, C]
  VariantParams hc_attn;
  VariantParams hc_mlp;
};

// Per-site record of one forward pass, in depth order (attn0, mlp0, attn1, ...).
struct ForwardCapture {
  std::vector<MixBundle> bundles;
  std::vector<ad::Tensor> mixed;  // H_res X per site, [N, n, C]
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // tokens holds `batch` sequences of `seq` bytes back to back; returns
  // logits [batch*seq, vocab].
  ad::Tensor forward(std::span<const int> tokens, std::size_t batch,
                     std::size_t seq, ForwardCapture* capture = nullptr) const;
  ad::Tensor forward(std::span<const int> tokens,
                     ForwardCapture* capture = nullptr) const {
    return forward(tokens, 1, tokens.size(), capture);
  }

  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;

  Archive to_archive(std::int64_t step = 0) const;
  static Model from_archive(const Archive& archive);

  const std::vector<BlockParams>& blocks() const { return blocks_; }

 private:
  ModelConfig config_;
  ad::Tensor wte_;  // [V, C]
  ad::Tensor wpe_;  // [T, C]
  std::vector<BlockParams> blocks_;
  ad::Tensor final_norm_;  // [C]
  ad::Tensor lm_head_;     // [C, V]
};

// Mean next-byte cross-entropy.
ad::Tensor lm_loss(const ad::Tensor& logits, std::span<const int> targets);

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& c);
ModelConfig config_from_fields(const Archive& archive);

}  // namespace hclab
