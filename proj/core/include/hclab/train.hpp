// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic single-process training: byte-window sampling, AdamW with
// decoupled weight decay, warmup + cosine learning rate, global-norm clipping,
// JSON-lines metrics, checkpoints and periodic mapping snapshots.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hclab/model.hpp"

namespace hclab {

struct TrainConfig {
  std::size_t batch = 16;
  std::size_t grad_accum = 1;
  std::size_t iterations = 2000;
  std::size_t warmup = 100;
  double lr_max = 3e-3;
  double lr_min = 3e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double clip = 1.0;
  std::size_t eval_interval = 100;  // 0 disables validation
  std::size_t eval_batches = 4;
  std::size_t snapshot_interval = 500;  // 0 disables snapshots
  bool freeze_hc_weights = false;  // keep hyper-connection projections at zero
  bool log_timing = true;          // false writes ms = 0 for byte-stable logs
  std::uint64_t seed = 1337;       // data sampling
  std::filesystem::path corpus;
  std::filesystem::path out;

  void validate() const;
};

// Steps count from 1. Linear ramp to lr_max at `warmup`, cosine down to
// lr_min at `iterations`, lr_min afterwards.
double cosine_lr(std::int64_t step, const TrainConfig& cfg);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::int64_t t = 0;
};

// Updates every parameter that requires grad using its accumulated gradient.
// Decay only touches parameters flagged `decay`.
void adamw_step(std::span<const NamedParam> params, AdamState& state, double lr,
                const AdamWConfig& cfg);

// Returns the pre-clip global L2 norm over all gradients and rescales them
// in place when it exceeds max_norm.
double clip_gradients(std::span<const ad::Tensor> params, double max_norm);

std::vector<std::uint8_t> read_corpus(const std::filesystem::path& path);

struct TokenBatch {
  std::vector<int> tokens;   // batch * seq
  std::vector<int> targets;  // tokens shifted by one
  std::size_t batch = 0;
  std::size_t seq = 0;
};

// (bytes[start, start+seq), bytes[start+1, start+seq+1))
TokenBatch window_at(std::span<const std::uint8_t> bytes, std::size_t start,
                     std::size_t seq);

class CorpusTooSmallError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kValFraction = 0.1;

// The last kValFraction of the corpus is held out. Training windows lie
// entirely before the split and validation windows entirely after it.
class BatchSampler {
 public:
  BatchSampler(std::span<const std::uint8_t> corpus, std::size_t seq,
               std::size_t batch, std::uint64_t seed);

  TokenBatch next_train();
  TokenBatch next_val();

  std::size_t split() const { return split_; }
  // Start offsets drawn so far, for inspection.
  const std::vector<std::size_t>& train_starts() const { return train_starts_; }
  const std::vector<std::size_t>& val_starts() const { return val_starts_; }

 private:
  TokenBatch draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi,
                  std::vector<std::size_t>& log);

  std::span<const std::uint8_t> corpus_;
  std::size_t seq_, batch_, split_;
  std::mt19937_64 train_rng_, val_rng_;
  std::vector<std::size_t> train_starts_, val_starts_;
};

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
  double grad_norm = 0.0;
  double lr = 0.0;
  double ms = 0.0;
};

// One JSON object, keys in the fixed order step, loss, val_loss, grad_norm,
// lr, ms.
std::string to_json_line(const MetricsRow& row);

class NanLossError : public std::runtime_error {
 public:
  NanLossError(std::int64_t step, std::filesystem::path dump);
  std::int64_t step() const { return step_; }
  const std::filesystem::path& dump() const { return dump_; }

 private:
  std::int64_t step_;
  std::filesystem::path dump_;
};

inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kNanDumpFile = "nan_dump.bin";
inline constexpr const char* kSnapshotDir = "snapshots";

std::string snapshot_name(std::int64_t step);

// Residual mappings and mixed-stream cosine per site on a fixed batch.
Archive snapshot_archive(const Model& model, const TokenBatch& batch,
                         std::int64_t step);

struct TrainResult {
  std::vector<MetricsRow> rows;
};

// Trains `model` in place. When cfg.out is set, writes metrics, snapshots
// and the final checkpoint there.
TrainResult train_loop(Model& model, const TrainConfig& cfg,
                       std::span<const std::uint8_t> corpus);

}  // namespace hclab
