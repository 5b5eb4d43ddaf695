// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "hclab/train.hpp"

using namespace hclab;

namespace {

// One optimizer step (forward, backward, clip, AdamW) at L = 4, C = 128,
// n = 4, T = 32, batch 4.
void BM_TrainStep(benchmark::State& state) {
  const auto v = static_cast<Variant>(state.range(0));
  ModelConfig mc;
  mc.layers = 4;
  mc.channels = 128;
  mc.heads = 4;
  mc.streams = 4;
  mc.context = 32;
  mc.variant = v;
  const Model model(mc);
  const std::vector<NamedParam> params = model.parameters();
  std::vector<ad::Tensor> tensors;
  for (const NamedParam& p : params) tensors.push_back(p.tensor);
  std::mt19937_64 rng(5);
  std::vector<int> tokens(4 * 32), targets(4 * 32);
  for (int& t : tokens) t = static_cast<int>(rng() % 256);
  for (int& t : targets) t = static_cast<int>(rng() % 256);
  AdamState adam;
  for (auto _ : state) {
    for (ad::Tensor& t : tensors) t.zero_grad();
    const ad::Tensor loss = ad::cross_entropy(model.forward(tokens, 4, 32), targets);
    loss.backward();
    clip_gradients(tensors, 1.0);
    adamw_step(params, adam, 1e-3, AdamWConfig{});
  }
  state.SetLabel(std::string(variant_name(v)));
}
BENCHMARK(BM_TrainStep)
    ->DenseRange(static_cast<int>(Variant::kRc), static_cast<int>(Variant::kShc))
    ->Unit(benchmark::kMillisecond);

}  // namespace
