// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Statistics over captured residual mappings and mixed streams, the
// auxiliary parameter-count formulas, and the CSV exporters.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hclab/hyperconn.hpp"
#include "hclab/manifold.hpp"
#include "hclab/model.hpp"

namespace hclab::diag {

using manifold::Mat;

// Linear interpolation between closest ranks, q in [0, 1].
double percentile(std::vector<double> values, double q);

struct RowMaxStats {
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

// Pools every row maximum across the set.
RowMaxStats row_max_stats(std::span<const Mat> set);

// Share of matrices whose every row has its strict maximum on the diagonal.
double diag_dominance_fraction(std::span<const Mat> set);

// Mean pairwise cosine between the n streams of each token, averaged over
// tokens. mixed: [N, n, C].
double stream_cosine(const ad::Tensor& mixed);

struct PrefixStats {
  std::size_t depth = 0;  // number of mappings in the product
  double colsum_min = 0.0, colsum_max = 0.0, colsum_mean = 0.0;
  double rowsum_min = 0.0, rowsum_max = 0.0;
  double marginal_max_dev = 0.0;  // max |row or column sum - 1|
  double spec_mean = 0.0, spec_std = 0.0, spec_min = 0.0, spec_max = 0.0;
  double spec_max_dev = 0.0;  // max |spectral norm - 1|
};

// per_layer[l][t] is token t's mapping at depth l. Prefix d is
// H_{d-1} ... H_1 H_0 for each token.
std::vector<PrefixStats> composite_chain(const std::vector<std::vector<Mat>>& per_layer);

struct HistogramSpec {
  double lo = -1.5;
  double hi = 1.5;
  double width = 0.05;
  std::size_t bins() const;
};

struct Histogram {
  HistogramSpec spec;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;  // x < lo
  std::uint64_t overflow = 0;   // x >= hi
  std::uint64_t total() const;
  double bin_lo(std::size_t i) const;
};

Histogram entry_histogram(std::span<const Mat> set, const HistogramSpec& spec = {});

struct ParamBreakdown {
  std::uint64_t shared = 0;    // pre/post generators, norm gain, gates
  std::uint64_t residual = 0;  // residual-mapping generator
  std::uint64_t total() const { return shared + residual; }
};

// Auxiliary parameters of one hyper-connection site.
ParamBreakdown param_count(Variant variant, std::size_t n, std::size_t channels);

struct SiteStats {
  std::size_t site = 0;
  RowMaxStats rowmax;
  double diag_fraction = 0.0;
  double cosine = 0.0;  // NaN-free; 0 for single-stream models
};

struct AnalysisReport {
  std::vector<SiteStats> sites;
  std::vector<PrefixStats> chain;
  Histogram histogram;
  std::size_t samples = 0;
  std::size_t tokens = 0;
};

// Runs the model over `windows` (each a byte sequence of equal length) and
// pools the captured mappings per site.
AnalysisReport analyze_model(const Model& model,
                             const std::vector<std::vector<int>>& windows,
                             const HistogramSpec& spec = {});

// "attn" for even sites, "mlp" for odd.
std::string site_branch(std::size_t site);

void write_fig2_rowmax(const std::filesystem::path& path, const AnalysisReport& r);
void write_fig2_diagfrac(const std::filesystem::path& path, const AnalysisReport& r);
void write_fig3_cosine(const std::filesystem::path& path, const AnalysisReport& r);
void write_fig5_colsum(const std::filesystem::path& path, const AnalysisReport& r);
void write_fig5_specnorm(const std::filesystem::path& path, const AnalysisReport& r);
void write_fig6_hist(const std::filesystem::path& path, const Histogram& h);
void write_fig7_params(const std::filesystem::path& path, std::size_t n_max,
                       std::size_t channels);

// Writes all of the above except fig7 into `dir`.
void write_report(const std::filesystem::path& dir, const AnalysisReport& r);

inline constexpr const char* kFig2RowmaxHeader = "site,layer,branch,rowmax_median,rowmax_p10,rowmax_p90";
inline constexpr const char* kFig2DiagfracHeader = "site,layer,branch,diag_dominance_fraction";
inline constexpr const char* kFig3CosineHeader = "site,layer,branch,mean_pairwise_cosine";
inline constexpr const char* kFig5ColsumHeader =
    "depth,colsum_min,colsum_max,colsum_mean,rowsum_min,rowsum_max,marginal_max_dev";
inline constexpr const char* kFig5SpecnormHeader =
    "depth,specnorm_mean,specnorm_std,specnorm_min,specnorm_max,specnorm_max_dev";
inline constexpr const char* kFig6HistHeader = "bin_lo,bin_hi,count";
inline constexpr const char* kFig7ParamsHeader =
    "n,dim,rc,hc,mhc,mhc_lite,shc,hc_residual,mhc_residual,mhc_lite_residual,shc_residual";

}  // namespace hclab::diag
