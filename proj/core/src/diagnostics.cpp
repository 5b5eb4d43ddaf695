// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hclab::diag {
namespace {

// Tolerance so that values sitting exactly on a bin edge land in the upper bin
// despite the edge itself not being representable.
constexpr double kEdgeSlack = 1e-9;

void require_nonempty(std::span<const Mat> set, const char* fn) {
  if (set.empty()) throw std::invalid_argument(std::string(fn) + ": empty matrix set");
}

std::uint64_t factorial(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << header << '\n';
  return out;
}

void site_prefix(std::ofstream& out, std::size_t site) {
  out << site << ',' << site / 2 << ',' << site_branch(site);
}

}  // namespace

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RowMaxStats row_max_stats(std::span<const Mat> set) {
  require_nonempty(set, "row_max_stats");
  std::vector<double> maxima;
  for (const Mat& m : set) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) maxima.push_back(m.row(r).maxCoeff());
  }
  return {percentile(maxima, 0.5), percentile(maxima, 0.1), percentile(maxima, 0.9)};
}

double diag_dominance_fraction(std::span<const Mat> set) {
  require_nonempty(set, "diag_dominance_fraction");
  std::size_t dominant = 0;
  for (const Mat& m : set) {
    bool all = true;
    for (Eigen::Index r = 0; r < m.rows() && all; ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c != r && m(r, c) >= m(r, r)) {
          all = false;
          break;
        }
      }
    }
    if (all) ++dominant;
  }
  return static_cast<double>(dominant) / static_cast<double>(set.size());
}

double stream_cosine(const ad::Tensor& mixed) {
  if (mixed.rank() != 3) {
    throw ad::ShapeError("stream_cosine expects [N, n, C], got " + ad::shape_str(mixed.shape()));
  }
  const std::size_t tokens = mixed.dim(0), n = mixed.dim(1), c = mixed.dim(2);
  if (n < 2) throw std::invalid_argument("stream_cosine needs at least two streams");
  if (tokens == 0) throw std::invalid_argument("stream_cosine over zero tokens");
  const auto data = mixed.data();
  double total = 0.0;
  for (std::size_t t = 0; t < tokens; ++t) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        data.data() + t * n * c, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    const Mat gram = x * x.transpose();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double denom = std::sqrt(gram(i, i) * gram(j, j));
        if (denom > 0.0) sum += gram(i, j) / denom;
      }
    }
    total += sum / static_cast<double>(n * (n - 1) / 2);
  }
  return total / static_cast<double>(tokens);
}

std::vector<PrefixStats> composite_chain(const std::vector<std::vector<Mat>>& per_layer) {
  if (per_layer.empty()) return {};
  const std::size_t tokens = per_layer.front().size();
  if (tokens == 0) throw std::invalid_argument("composite_chain over zero tokens");
  const Eigen::Index n = per_layer.front().front().rows();
  for (const auto& layer : per_layer) {
    if (layer.size() != tokens) {
      throw ad::ShapeError("composite_chain: layers disagree on token count");
    }
    for (const Mat& m : layer) {
      if (m.rows() != n || m.cols() != n) {
        throw ad::ShapeError("composite_chain: mappings must all be " + std::to_string(n) +
                             "x" + std::to_string(n));
      }
    }
  }

  std::vector<Mat> prod(tokens, Mat::Identity(n, n));
  std::vector<PrefixStats> out;
  std::vector<double> specs(tokens);
  for (std::size_t d = 0; d < per_layer.size(); ++d) {
    PrefixStats s;
    s.depth = d + 1;
    s.colsum_min = s.rowsum_min = std::numeric_limits<double>::infinity();
    s.colsum_max = s.rowsum_max = -std::numeric_limits<double>::infinity();
    double colsum_total = 0.0;
    for (std::size_t t = 0; t < tokens; ++t) {
      prod[t] = per_layer[d][t] * prod[t];
      const manifold::Vec cols = prod[t].colwise().sum().transpose();
      const manifold::Vec rows = prod[t].rowwise().sum();
      s.colsum_min = std::min(s.colsum_min, cols.minCoeff());
      s.colsum_max = std::max(s.colsum_max, cols.maxCoeff());
      s.rowsum_min = std::min(s.rowsum_min, rows.minCoeff());
      s.rowsum_max = std::max(s.rowsum_max, rows.maxCoeff());
      colsum_total += cols.sum();
      specs[t] = manifold::spectral_norm(prod[t]);
    }
    s.colsum_mean = colsum_total / static_cast<double>(tokens * n);
    s.marginal_max_dev = std::max({std::abs(s.colsum_min - 1.0), std::abs(s.colsum_max - 1.0),
                                   std::abs(s.rowsum_min - 1.0), std::abs(s.rowsum_max - 1.0)});
    double mean = 0.0;
    for (double v : specs) mean += v;
    mean /= static_cast<double>(tokens);
    double var = 0.0;
    for (double v : specs) var += (v - mean) * (v - mean);
    s.spec_mean = mean;
    s.spec_std = std::sqrt(var / static_cast<double>(tokens));
    s.spec_min = *std::min_element(specs.begin(), specs.end());
    s.spec_max = *std::max_element(specs.begin(), specs.end());
    s.spec_max_dev = std::max(std::abs(s.spec_min - 1.0), std::abs(s.spec_max - 1.0));
    out.push_back(s);
  }
  return out;
}

std::size_t HistogramSpec::bins() const {
  if (!(width > 0.0) || !(hi > lo)) throw std::invalid_argument("bad histogram spec");
  return static_cast<std::size_t>(std::llround((hi - lo) / width));
}

// Interpolates the range rather than stepping by width so interior edges such
// as 0 come out exact.
double Histogram::bin_lo(std::size_t i) const {
  return spec.lo + (spec.hi - spec.lo) * static_cast<double>(i) / static_cast<double>(counts.size());
}

std::uint64_t Histogram::total() const {
  std::uint64_t t = underflow + overflow;
  for (auto c : counts) t += c;
  return t;
}

Histogram entry_histogram(std::span<const Mat> set, const HistogramSpec& spec) {
  Histogram h;
  h.spec = spec;
  const std::size_t bins = spec.bins();
  h.counts.assign(bins, 0);
  for (const Mat& m : set) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double x = m.data()[i];
      const double pos = (x - spec.lo) / spec.width + kEdgeSlack;
      if (pos < 0.0) {
        ++h.underflow;
      } else if (pos >= static_cast<double>(bins)) {
        ++h.overflow;
      } else {
        ++h.counts[static_cast<std::size_t>(pos)];
      }
    }
  }
  return h;
}

ParamBreakdown param_count(Variant variant, std::size_t n, std::size_t channels) {
  if (n < 1) throw std::invalid_argument("param_count needs n >= 1");
  ParamBreakdown p;
  if (variant == Variant::kRc) return p;
  const std::uint64_t nc = static_cast<std::uint64_t>(n) * channels;
  p.shared = 2 * (nc * n + n) + 2 + nc;
  switch (variant) {
    case Variant::kHc:
    case Variant::kMhc:
      p.residual = nc * n * n + n * n + 1;
      break;
    case Variant::kMhcLite: {
      const std::uint64_t f = factorial(n);
      p.residual = nc * f + f + 1;
      break;
    }
    case Variant::kShc: {
      const std::uint64_t m = n - 1;
      const std::uint64_t k = m * (m - (m > 0 ? 1 : 0)) / 2;
      p.residual = 2 * (nc * k + k) + nc * m + m + 5;
      break;
    }
    case Variant::kRc:
      break;
  }
  return p;
}

std::string site_branch(std::size_t site) { return site % 2 == 0 ? "attn" : "mlp"; }

AnalysisReport analyze_model(const Model& model,
                             const std::vector<std::vector<int>>& windows,
                             const HistogramSpec& spec) {
  if (windows.empty()) throw std::invalid_argument("analyze_model needs at least one window");
  const std::size_t seq = windows.front().size();
  for (const auto& w : windows) {
    if (w.size() != seq) throw ad::ShapeError("analysis windows must share one length");
  }
  const std::size_t sites = model.config().sites();
  const std::size_t n = model.config().effective_streams();
  std::vector<std::vector<Mat>> per_site(sites);
  std::vector<double> cosine_sum(sites, 0.0);

  ad::NoGradGuard no_grad;
  for (const auto& w : windows) {
    ForwardCapture cap;
    model.forward(w, 1, seq, &cap);
    for (std::size_t s = 0; s < sites; ++s) {
      for (std::size_t t = 0; t < seq; ++t) {
        per_site[s].push_back(token_matrix(cap.bundles[s].h_res, t));
      }
      if (n >= 2) cosine_sum[s] += stream_cosine(cap.mixed[s]);
    }
  }

  AnalysisReport r;
  r.samples = windows.size();
  r.tokens = windows.size() * seq;
  std::vector<Mat> pooled;
  for (std::size_t s = 0; s < sites; ++s) {
    SiteStats st;
    st.site = s;
    st.rowmax = row_max_stats(per_site[s]);
    st.diag_fraction = diag_dominance_fraction(per_site[s]);
    st.cosine = n >= 2 ? cosine_sum[s] / static_cast<double>(windows.size()) : 0.0;
    r.sites.push_back(st);
    pooled.insert(pooled.end(), per_site[s].begin(), per_site[s].end());
  }
  r.chain = composite_chain(per_site);
  r.histogram = entry_histogram(pooled, spec);
  return r;
}

void write_fig2_rowmax(const std::filesystem::path& path, const AnalysisReport& r) {
  auto out = open_csv(path, kFig2RowmaxHeader);
  for (const SiteStats& s : r.sites) {
    site_prefix(out, s.site);
    out << ',' << s.rowmax.median << ',' << s.rowmax.p10 << ',' << s.rowmax.p90 << '\n';
  }
}

void write_fig2_diagfrac(const std::filesystem::path& path, const AnalysisReport& r) {
  auto out = open_csv(path, kFig2DiagfracHeader);
  for (const SiteStats& s : r.sites) {
    site_prefix(out, s.site);
    out << ',' << s.diag_fraction << '\n';
  }
}

void write_fig3_cosine(const std::filesystem::path& path, const AnalysisReport& r) {
  auto out = open_csv(path, kFig3CosineHeader);
  for (const SiteStats& s : r.sites) {
    site_prefix(out, s.site);
    out << ',' << s.cosine << '\n';
  }
}

void write_fig5_colsum(const std::filesystem::path& path, const AnalysisReport& r) {
  auto out = open_csv(path, kFig5ColsumHeader);
  for (const PrefixStats& p : r.chain) {
    out << p.depth << ',' << p.colsum_min << ',' << p.colsum_max << ',' << p.colsum_mean << ','
        << p.rowsum_min << ',' << p.rowsum_max << ',' << p.marginal_max_dev << '\n';
  }
}

void write_fig5_specnorm(const std::filesystem::path& path, const AnalysisReport& r) {
  auto out = open_csv(path, kFig5SpecnormHeader);
  for (const PrefixStats& p : r.chain) {
    out << p.depth << ',' << p.spec_mean << ',' << p.spec_std << ',' << p.spec_min << ','
        << p.spec_max << ',' << p.spec_max_dev << '\n';
  }
}

void write_fig6_hist(const std::filesystem::path& path, const Histogram& h) {
  auto out = open_csv(path, kFig6HistHeader);
  out << "-inf," << h.spec.lo << ',' << h.underflow << '\n';
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << h.bin_lo(i) << ',' << h.bin_lo(i + 1) << ',' << h.counts[i] << '\n';
  }
  out << h.spec.hi << ",inf," << h.overflow << '\n';
}

void write_fig7_params(const std::filesystem::path& path, std::size_t n_max,
                       std::size_t channels) {
  auto out = open_csv(path, kFig7ParamsHeader);
  const Variant residual_order[] = {Variant::kHc, Variant::kMhc, Variant::kMhcLite, Variant::kShc};
  for (std::size_t n = 2; n <= n_max; ++n) {
    out << n << ',' << channels << ',' << param_count(Variant::kRc, n, channels).total();
    for (Variant v : residual_order) out << ',' << param_count(v, n, channels).total();
    for (Variant v : residual_order) out << ',' << param_count(v, n, channels).residual;
    out << '\n';
  }
}

void write_report(const std::filesystem::path& dir, const AnalysisReport& r) {
  std::filesystem::create_directories(dir);
  write_fig2_rowmax(dir / "fig2_rowmax.csv", r);
  write_fig2_diagfrac(dir / "fig2_diagfrac.csv", r);
  write_fig3_cosine(dir / "fig3_cosine.csv", r);
  write_fig5_colsum(dir / "fig5_colsum.csv", r);
  write_fig5_specnorm(dir / "fig5_specnorm.csv", r);
  write_fig6_hist(dir / "fig6_hist.csv", r.histogram);
}

}  // namespace hclab::diag
