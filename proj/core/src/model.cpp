// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace hclab {
namespace {

using ad::Tensor;

constexpr double kInitStd = 0.02;

Tensor normal_tensor(ad::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::size_t parse_size(const Archive& a, const std::string& key) {
  const auto v = a.field(key);
  if (!v) throw ArchiveError("checkpoint lacks config field '" + key + "'");
  return static_cast<std::size_t>(std::stoull(*v));
}

}  // namespace

void ModelConfig::validate() const {
  if (heads == 0 || channels == 0 || channels % heads != 0) {
    throw std::invalid_argument("channels (" + std::to_string(channels) +
                                ") must be a positive multiple of heads (" +
                                std::to_string(heads) + ")");
  }
  if (streams < 1) throw std::invalid_argument("streams must be >= 1");
  if (variant != Variant::kRc && streams < 2) {
    throw std::invalid_argument("hyper-connection variants need streams >= 2");
  }
  if (context < 1) throw std::invalid_argument("context must be >= 1");
  if (vocab < 1) throw std::invalid_argument("vocab must be >= 1");
  if (sk_iters < 1) throw std::invalid_argument("sk_iters must be >= 1");
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  const std::size_t n = config_.effective_streams();
  // Base weights come from one stream seeded by `seed` and drawn in a fixed
  // order, so every variant shares them under the same seed.
  std::mt19937_64 rng(config_.seed);
  const double out_std = kInitStd / std::sqrt(2.0 * static_cast<double>(
                                                        std::max<std::size_t>(1, config_.layers)));
  wte_ = normal_tensor({config_.vocab, c}, kInitStd, rng);
  wpe_ = normal_tensor({config_.context, c}, kInitStd, rng);
  blocks_.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    BlockParams b;
    b.attn_norm = Tensor::full({c}, 1.0, true);
    b.w_qkv = normal_tensor({c, 3 * c}, kInitStd, rng);
    b.w_attn_out = normal_tensor({c, c}, out_std, rng);
    b.mlp_norm = Tensor::full({c}, 1.0, true);
    b.w_fc = normal_tensor({c, 4 * c}, kInitStd, rng);
    b.w_mlp_out = normal_tensor({4 * c, c}, out_std, rng);
    b.hc_attn = VariantParams::init(config_.variant, n, c);
    b.hc_mlp = VariantParams::init(config_.variant, n, c);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = Tensor::full({c}, 1.0, true);
  lm_head_ = normal_tensor({c, config_.vocab}, kInitStd, rng);
}

Tensor Model::forward(std::span<const int> tokens, std::size_t batch,
                      std::size_t seq, ForwardCapture* capture) const {
  if (seq == 0 || batch == 0 || tokens.size() != batch * seq) {
    throw ad::ShapeError("forward: " + std::to_string(tokens.size()) +
                         " tokens do not form " + std::to_string(batch) + "x" +
                         std::to_string(seq));
  }
  if (seq > config_.context) {
    throw std::invalid_argument("sequence length " + std::to_string(seq) +
                                " exceeds context " + std::to_string(config_.context));
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<int>(i % seq);
  }
  const Tensor x = ad::add(ad::embedding(wte_, tokens), ad::embedding(wpe_, positions));
  StreamState streams = expand_streams(x, config_.effective_streams());

  auto run_site = [&](const VariantParams& hc, const Branch& branch) {
    const MixBundle bundle = generate_bundle(streams, hc, config_.sk_iters);
    Tensor mixed;
    streams = hyper_step(streams, branch, bundle, capture ? &mixed : nullptr);
    if (capture) {
      capture->bundles.push_back(
          {bundle.h_pre.detach(), bundle.h_post.detach(), bundle.h_res.detach()});
      capture->mixed.push_back(mixed.detach());
    }
  };

  for (const BlockParams& b : blocks_) {
    run_site(b.hc_attn, [&](const Tensor& h) {
      const Tensor qkv = ad::matmul(ad::rmsnorm(h, b.attn_norm), b.w_qkv);
      return ad::matmul(ad::causal_attention(qkv, batch, seq, config_.heads), b.w_attn_out);
    });
    run_site(b.hc_mlp, [&](const Tensor& h) {
      const Tensor hidden = ad::gelu(ad::matmul(ad::rmsnorm(h, b.mlp_norm), b.w_fc));
      return ad::matmul(hidden, b.w_mlp_out);
    });
  }
  const Tensor out = ad::rmsnorm(collapse_streams(streams), final_norm_);
  return ad::matmul(out, lm_head_);
}

std::vector<NamedParam> Model::parameters() const {
  std::vector<NamedParam> out;
  out.push_back({"wte", wte_, true, false});
  out.push_back({"wpe", wpe_, true, false});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const BlockParams& b = blocks_[l];
    const std::string p = "block" + std::to_string(l) + ".";
    out.push_back({p + "attn_norm", b.attn_norm, false, false});
    out.push_back({p + "w_qkv", b.w_qkv, true, false});
    out.push_back({p + "w_attn_out", b.w_attn_out, true, false});
    out.push_back({p + "mlp_norm", b.mlp_norm, false, false});
    out.push_back({p + "w_fc", b.w_fc, true, false});
    out.push_back({p + "w_mlp_out", b.w_mlp_out, true, false});
    for (auto& np : b.hc_attn.parameters(p + "hc_attn.")) out.push_back(std::move(np));
    for (auto& np : b.hc_mlp.parameters(p + "hc_mlp.")) out.push_back(std::move(np));
  }
  out.push_back({"final_norm", final_norm_, false, false});
  out.push_back({"lm_head", lm_head_, true, false});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const NamedParam& p : parameters()) total += p.tensor.size();
  return total;
}

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& c) {
  return {{"layers", std::to_string(c.layers)},
          {"heads", std::to_string(c.heads)},
          {"channels", std::to_string(c.channels)},
          {"streams", std::to_string(c.streams)},
          {"context", std::to_string(c.context)},
          {"vocab", std::to_string(c.vocab)},
          {"variant", std::string(variant_name(c.variant))},
          {"sk_iters", std::to_string(c.sk_iters)},
          {"seed", std::to_string(c.seed)}};
}

ModelConfig config_from_fields(const Archive& a) {
  ModelConfig c;
  c.layers = parse_size(a, "layers");
  c.heads = parse_size(a, "heads");
  c.channels = parse_size(a, "channels");
  c.streams = parse_size(a, "streams");
  c.context = parse_size(a, "context");
  c.vocab = parse_size(a, "vocab");
  c.sk_iters = static_cast<int>(parse_size(a, "sk_iters"));
  c.seed = parse_size(a, "seed");
  const auto variant = a.field("variant");
  if (!variant) throw ArchiveError("checkpoint lacks config field 'variant'");
  c.variant = parse_variant(*variant);
  return c;
}

Archive Model::to_archive(std::int64_t step) const {
  Archive a;
  a.set_field("kind", "checkpoint");
  for (auto& [k, v] : config_fields(config_)) a.set_field(k, v);
  a.set_field("step", std::to_string(step));
  for (const NamedParam& p : parameters()) {
    NamedArray arr;
    arr.name = p.name;
    arr.dims.assign(p.tensor.shape().begin(), p.tensor.shape().end());
    arr.data.assign(p.tensor.data().begin(), p.tensor.data().end());
    a.arrays.push_back(std::move(arr));
  }
  return a;
}

Model Model::from_archive(const Archive& a) {
  Model model(config_from_fields(a));
  for (NamedParam& p : model.parameters()) {
    const NamedArray& arr = a.at(p.name);
    if (arr.data.size() != p.tensor.size() ||
        !std::equal(arr.dims.begin(), arr.dims.end(), p.tensor.shape().begin(),
                    p.tensor.shape().end())) {
      throw ArchiveError("array '" + p.name + "' has the wrong shape");
    }
    std::copy(arr.data.begin(), arr.data.end(), p.tensor.mutable_data().begin());
  }
  return model;
}

Tensor lm_loss(const Tensor& logits, std::span<const int> targets) {
  return ad::cross_entropy(logits, targets);
}

}  // namespace hclab
