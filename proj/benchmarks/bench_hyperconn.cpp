// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "hclab/hyperconn.hpp"

using namespace hclab;

namespace {

// Bundle generation for one site over 128 tokens at n = 4, C = 128.
void BM_GenerateBundle(benchmark::State& state) {
  const auto v = static_cast<Variant>(state.range(0));
  const std::size_t n = 4, c = 128, t = 128;
  std::mt19937_64 rng(4);
  VariantParams p = VariantParams::init(v, n, c);
  perturb_params(p, rng, 0.02);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(t * n * c);
  for (double& e : x) e = d(rng);
  const StreamState s{ad::Tensor::from({t, n, c}, x)};
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(generate_bundle(s, p));
  state.SetLabel(std::string(variant_name(v)));
}
BENCHMARK(BM_GenerateBundle)
    ->Arg(static_cast<int>(Variant::kHc))
    ->Arg(static_cast<int>(Variant::kMhc))
    ->Arg(static_cast<int>(Variant::kMhcLite))
    ->Arg(static_cast<int>(Variant::kShc));

}  // namespace
