// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "hclab/manifold.hpp"

namespace mf = hclab::manifold;
using mf::Mat;

namespace {

Mat random_mat(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

void BM_Sinkhorn(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Mat logits = random_mat(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(mf::sinkhorn_knopp(logits, 20));
}
BENCHMARK(BM_Sinkhorn)->Arg(4)->Arg(8);

void BM_ShcResidual(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto consts = mf::ManifoldConstants::make(n);
  std::normal_distribution<double> d(0.0, 1.0);
  const std::size_t m = n - 1;
  std::vector<double> a(m * (m - 1) / 2), b(a.size());
  for (double& x : a) x = d(rng);
  for (double& x : b) x = d(rng);
  mf::Vec sigma = mf::Vec::Constant(static_cast<Eigen::Index>(m), 0.5);
  for (auto _ : state) {
    const mf::ShcFactors f{mf::cayley(mf::skew_from_upper(a, m)), mf::cayley(mf::skew_from_upper(b, m)),
                           sigma};
    benchmark::DoNotOptimize(mf::shc_residual(f, consts));
  }
}
BENCHMARK(BM_ShcResidual)->Arg(4)->Arg(8);

void BM_BvnCombine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto basis = mf::BvnBasis::make(n);
  std::vector<double> w(basis.matrices.size(), 1.0 / static_cast<double>(basis.matrices.size()));
  for (auto _ : state) benchmark::DoNotOptimize(mf::bvn_combine(w, basis));
}
BENCHMARK(BM_BvnCombine)->Arg(4)->Arg(6);

void BM_SpectralNorm(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Mat m = random_mat(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(mf::spectral_norm(m));
}
BENCHMARK(BM_SpectralNorm)->Arg(4)->Arg(16);

}  // namespace
