// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include <Eigen/Core>

#include "hclab/diagnostics.hpp"
#include "json.hpp"

namespace hclab {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

NamedArray to_array(std::string name, const ad::Tensor& t) {
  NamedArray a;
  a.name = std::move(name);
  a.dims.assign(t.shape().begin(), t.shape().end());
  a.data.assign(t.data().begin(), t.data().end());
  return a;
}

double evaluate(const Model& model, const std::vector<TokenBatch>& batches) {
  ad::NoGradGuard no_grad;
  double total = 0.0;
  for (const TokenBatch& b : batches) {
    total += lm_loss(model.forward(b.tokens, b.batch, b.seq), b.targets).item();
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace

void TrainConfig::validate() const {
  require(batch >= 1, "batch must be >= 1");
  require(grad_accum >= 1, "grad_accum must be >= 1");
  require(warmup <= iterations || iterations == 0,
          "warmup (" + std::to_string(warmup) + ") exceeds iterations (" +
              std::to_string(iterations) + ")");
  require(lr_min <= lr_max, "lr_min must not exceed lr_max");
  require(lr_min >= 0.0, "lr_min must be >= 0");
  require(clip > 0.0, "clip must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "betas must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(eval_interval == 0 || eval_batches >= 1, "eval_batches must be >= 1");
}

double cosine_lr(std::int64_t step, const TrainConfig& cfg) {
  if (step <= 0) return cfg.warmup == 0 ? cfg.lr_max : 0.0;
  const auto s = static_cast<double>(step);
  const auto warmup = static_cast<double>(cfg.warmup);
  if (s < warmup) return cfg.lr_max * s / warmup;
  if (step >= static_cast<std::int64_t>(cfg.iterations)) {
    return cfg.iterations == cfg.warmup ? cfg.lr_max : cfg.lr_min;
  }
  const double progress = (s - warmup) / (static_cast<double>(cfg.iterations) - warmup);
  return cfg.lr_min +
         0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<const NamedParam> params, AdamState& state, double lr,
                const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (const NamedParam& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match parameters");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor t = params[i].tensor;
    if (!t.requires_grad()) continue;
    if (state.m[i].size() != t.size()) throw std::invalid_argument("adamw_step: shape mismatch");
    const auto size = static_cast<Eigen::Index>(t.size());
    Eigen::Map<Eigen::ArrayXd> w(t.mutable_data().data(), size);
    Eigen::Map<Eigen::ArrayXd> m(state.m[i].data(), size);
    Eigen::Map<Eigen::ArrayXd> v(state.v[i].data(), size);
    if (!t.has_grad()) {
      m *= cfg.beta1;
      v *= cfg.beta2;
    } else {
      Eigen::Map<const Eigen::ArrayXd> g(t.grad().data(), size);
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    }
    if (params[i].decay) w *= 1.0 - lr * cfg.weight_decay;
    w -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
  }
}

double clip_gradients(std::span<const ad::Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const ad::Tensor& p : params) {
    if (!p.has_grad()) continue;
    sq += Eigen::Map<const Eigen::VectorXd>(p.grad().data(), static_cast<Eigen::Index>(p.size()))
              .squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const ad::Tensor& p : params) {
      if (!p.has_grad()) continue;
      Eigen::Map<Eigen::VectorXd>(p.node()->grad.data(), static_cast<Eigen::Index>(p.size())) *=
          factor;
    }
  }
  return norm;
}

std::vector<std::uint8_t> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TokenBatch window_at(std::span<const std::uint8_t> bytes, std::size_t start, std::size_t seq) {
  if (start + seq + 1 > bytes.size()) {
    throw std::out_of_range("window at " + std::to_string(start) + " of length " +
                            std::to_string(seq) + " runs past the data");
  }
  TokenBatch b;
  b.batch = 1;
  b.seq = seq;
  for (std::size_t i = 0; i < seq; ++i) {
    b.tokens.push_back(bytes[start + i]);
    b.targets.push_back(bytes[start + i + 1]);
  }
  return b;
}

BatchSampler::BatchSampler(std::span<const std::uint8_t> corpus, std::size_t seq,
                           std::size_t batch, std::uint64_t seed)
    : corpus_(corpus),
      seq_(seq),
      batch_(batch),
      split_(corpus.size() - static_cast<std::size_t>(
                                 std::floor(kValFraction * static_cast<double>(corpus.size())))),
      train_rng_(seed),
      val_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  require(seq >= 1 && batch >= 1, "sampler needs seq >= 1 and batch >= 1");
  const std::size_t need = seq + 1;
  if (split_ < need || corpus.size() - split_ < need) {
    throw CorpusTooSmallError(
        "corpus of " + std::to_string(corpus.size()) + " bytes is too small for windows of " +
        std::to_string(seq) + " (each split needs " + std::to_string(need) +
        " bytes; validation keeps the last 10%)");
  }
}

TokenBatch BatchSampler::draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi,
                              std::vector<std::size_t>& log) {
  // Starts in [lo, hi - seq - 1] keep the shifted targets inside [lo, hi).
  std::uniform_int_distribution<std::size_t> dist(lo, hi - seq_ - 1);
  TokenBatch out;
  out.batch = batch_;
  out.seq = seq_;
  out.tokens.reserve(batch_ * seq_);
  out.targets.reserve(batch_ * seq_);
  for (std::size_t b = 0; b < batch_; ++b) {
    const std::size_t start = dist(rng);
    log.push_back(start);
    for (std::size_t i = 0; i < seq_; ++i) {
      out.tokens.push_back(corpus_[start + i]);
      out.targets.push_back(corpus_[start + i + 1]);
    }
  }
  return out;
}

TokenBatch BatchSampler::next_train() { return draw(train_rng_, 0, split_, train_starts_); }

TokenBatch BatchSampler::next_val() {
  return draw(val_rng_, split_, corpus_.size(), val_starts_);
}

std::string to_json_line(const MetricsRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["loss"] = row.loss;
  if (row.val_loss) {
    j["val_loss"] = *row.val_loss;
  } else {
    j["val_loss"] = nullptr;
  }
  j["grad_norm"] = row.grad_norm;
  j["lr"] = row.lr;
  j["ms"] = row.ms;
  return j.dump();
}

NanLossError::NanLossError(std::int64_t step, std::filesystem::path dump)
    : std::runtime_error("non-finite loss or gradient at step " + std::to_string(step) +
                         (dump.empty() ? std::string() : "; state dumped to " + dump.string())),
      step_(step),
      dump_(std::move(dump)) {}

std::string snapshot_name(std::int64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "snapshot_%06lld.bin", static_cast<long long>(step));
  return buf;
}

Archive snapshot_archive(const Model& model, const TokenBatch& batch, std::int64_t step) {
  ad::NoGradGuard no_grad;
  ForwardCapture cap;
  model.forward(batch.tokens, batch.batch, batch.seq, &cap);
  Archive a;
  a.set_field("kind", "snapshot");
  a.set_field("step", std::to_string(step));
  a.set_field("variant", std::string(variant_name(model.config().variant)));
  a.set_field("streams", std::to_string(model.config().effective_streams()));
  a.set_field("sites", std::to_string(cap.bundles.size()));
  std::vector<double> cosine;
  for (std::size_t s = 0; s < cap.bundles.size(); ++s) {
    a.arrays.push_back(to_array("site" + std::to_string(s) + ".h_res", cap.bundles[s].h_res));
    cosine.push_back(model.config().effective_streams() >= 2 ? diag::stream_cosine(cap.mixed[s])
                                                             : 0.0);
  }
  a.arrays.push_back({"cosine", {cosine.size()}, cosine});
  return a;
}

TrainResult train_loop(Model& model, const TrainConfig& cfg,
                       std::span<const std::uint8_t> corpus) {
  cfg.validate();
  const std::size_t seq = model.config().context;
  BatchSampler sampler(corpus, seq, cfg.batch, cfg.seed);

  std::vector<TokenBatch> val_batches;
  if (cfg.eval_interval > 0) {
    for (std::size_t i = 0; i < cfg.eval_batches; ++i) val_batches.push_back(sampler.next_val());
  }
  const TokenBatch probe = val_batches.empty() ? sampler.next_val() : val_batches.front();

  std::vector<NamedParam> params = model.parameters();
  if (cfg.freeze_hc_weights) {
    for (NamedParam& p : params) {
      if (p.hc_weight) p.tensor.set_requires_grad(false);
    }
  }
  std::vector<ad::Tensor> tensors;
  for (const NamedParam& p : params) tensors.push_back(p.tensor);
  AdamState opt;
  const AdamWConfig adam{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};

  const bool write = !cfg.out.empty();
  std::ofstream metrics;
  if (write) {
    std::filesystem::create_directories(cfg.out);
    metrics.open(cfg.out / kMetricsFile, std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + (cfg.out / kMetricsFile).string());
    if (cfg.snapshot_interval > 0) std::filesystem::create_directories(cfg.out / kSnapshotDir);
  }
  auto snapshot = [&](std::int64_t step) {
    if (write && cfg.snapshot_interval > 0) {
      write_archive(cfg.out / kSnapshotDir / snapshot_name(step),
                    snapshot_archive(model, probe, step));
    }
  };
  snapshot(0);

  TrainResult result;
  const auto iters = static_cast<std::int64_t>(cfg.iterations);
  for (std::int64_t step = 1; step <= iters; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cosine_lr(step, cfg);
    for (ad::Tensor& t : tensors) t.zero_grad();

    double loss = 0.0;
    TokenBatch last;
    for (std::size_t micro = 0; micro < cfg.grad_accum; ++micro) {
      last = sampler.next_train();
      const ad::Tensor l = lm_loss(model.forward(last.tokens, last.batch, last.seq), last.targets);
      loss += l.item() / static_cast<double>(cfg.grad_accum);
      if (std::isfinite(l.item())) {
        ad::scale(l, 1.0 / static_cast<double>(cfg.grad_accum)).backward();
      }
    }
    const double grad_norm = clip_gradients(tensors, cfg.clip);
    if (!std::isfinite(loss) || !std::isfinite(grad_norm)) {
      std::filesystem::path dump;
      if (write) {
        Archive a = model.to_archive(step);
        a.set_field("kind", "nan_dump");
        a.set_field("loss", std::to_string(loss));
        a.set_field("grad_norm", std::to_string(grad_norm));
        std::vector<double> toks(last.tokens.begin(), last.tokens.end());
        a.arrays.push_back({"batch.tokens", {last.batch, last.seq}, std::move(toks)});
        dump = cfg.out / kNanDumpFile;
        write_archive(dump, a);
      }
      throw NanLossError(step, dump);
    }
    adamw_step(params, opt, lr, adam);

    MetricsRow row;
    row.step = step;
    row.loss = loss;
    row.grad_norm = grad_norm;
    row.lr = lr;
    if (cfg.eval_interval > 0 &&
        (step % static_cast<std::int64_t>(cfg.eval_interval) == 0 || step == iters)) {
      row.val_loss = evaluate(model, val_batches);
    }
    if (cfg.log_timing) {
      row.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                   .count();
    }
    if (write) metrics << to_json_line(row) << '\n' << std::flush;
    result.rows.push_back(row);

    if (cfg.snapshot_interval > 0 &&
        (step % static_cast<std::int64_t>(cfg.snapshot_interval) == 0 || step == iters)) {
      snapshot(step);
    }
  }
  if (cfg.freeze_hc_weights) {
    for (NamedParam& p : params) {
      if (p.hc_weight) p.tensor.set_requires_grad(true);
    }
  }
  if (write) write_archive(cfg.out / kCheckpointFile, model.to_archive(iters));
  return result;
}

}  // namespace hclab
