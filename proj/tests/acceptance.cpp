// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   hclab_acceptance <1..8|all> [--work DIR]
//
// Criteria 7 and 8 train desk-scale models; their runs live under DIR (default
// ./acceptance_work) and criterion 8 reuses the sHC run from criterion 7 when
// present. HCLAB_CORPUS overrides the generated byte corpus.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "cli.hpp"
#include "hclab/diagnostics.hpp"
#include "hclab/train.hpp"
#include "json.hpp"

using namespace hclab;
using ad::Tensor;
using manifold::Mat;
namespace mf = hclab::manifold;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(4) << x;
  return s.str();
}

double svd_norm(const Mat& m) { return Eigen::JacobiSVD<Mat>(m).singularValues()(0); }

Tensor gaussian(ad::Shape shape, std::mt19937_64& rng, double sd = 1.0, bool grad = false) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix.
Mat haar_orthogonal(std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat a(m, m);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = d(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR();
  for (std::size_t j = 0; j < m; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

// Per-token residual mappings from one generator call on random streams.
std::vector<Mat> generated(Variant v, std::size_t n, std::size_t c, std::size_t tokens,
                           std::mt19937_64& rng) {
  ad::NoGradGuard no_grad;
  VariantParams p = VariantParams::init(v, n, c);
  perturb_params(p, rng, 1.0);
  const MixBundle b = generate_bundle(StreamState{gaussian({tokens, n, c}, rng)}, p);
  std::vector<Mat> out;
  for (std::size_t t = 0; t < tokens; ++t) out.push_back(token_matrix(b.h_res, t));
  return out;
}

// --- corpus ------------------------------------------------------------------

// Seeded English-like text: sentences drawn from a small grammar with
// Zipf-weighted word choice, so a byte model has real structure to learn.
std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed) {
  static const std::vector<std::string> det{"the", "a", "every", "some", "this", "that", "no"};
  static const std::vector<std::string> adj{
      "quiet", "bright", "narrow", "ancient", "restless", "hollow", "golden", "patient",
      "crooked", "silver", "distant", "gentle", "stubborn", "frozen", "curious", "tired"};
  static const std::vector<std::string> noun{
      "river", "engine", "garden", "letter", "window", "mountain", "sailor", "clock",
      "village", "lantern", "forest", "stranger", "bridge", "harbor", "teacher", "market",
      "signal", "kitchen", "orchard", "library", "stream", "matrix", "lattice", "compass"};
  static const std::vector<std::string> verb{
      "carries", "watches", "follows", "remembers", "builds", "crosses", "mixes", "keeps",
      "measures", "answers", "gathers", "turns", "holds", "repairs", "counts", "opens"};
  static const std::vector<std::string> prep{"over", "under", "beside", "behind", "through",
                                             "near", "across", "toward"};
  static const std::vector<std::string> conj{"and", "but", "while", "because", "so"};
  std::mt19937_64 rng(seed);
  auto zipf = [&](const std::vector<std::string>& words) -> const std::string& {
    std::vector<double> w(words.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / static_cast<double>(i + 1);
    return words[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)];
  };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto phrase = [&] {
    std::string s = zipf(det) + " ";
    if (coin(0.5)) s += zipf(adj) + " ";
    return s + zipf(noun);
  };
  auto clause = [&] {
    std::string s = phrase() + " " + zipf(verb) + " " + phrase();
    if (coin(0.4)) s += " " + zipf(prep) + " " + phrase();
    return s;
  };
  std::string text;
  text.reserve(bytes + 256);
  while (text.size() < bytes) {
    std::string sentence = clause();
    if (coin(0.3)) sentence += ", " + zipf(conj) + " " + clause();
    sentence[0] = static_cast<char>(std::toupper(sentence[0]));
    text += sentence + (coin(0.1) ? "?\n" : ". ");
    if (coin(0.05)) text += "\n";
  }
  text.resize(bytes);
  return text;
}

std::filesystem::path desk_corpus(const std::filesystem::path& work) {
  if (const char* env = std::getenv("HCLAB_CORPUS")) return env;
  const auto path = work / "corpus.txt";
  constexpr std::size_t kBytes = 1 << 20;
  if (!std::filesystem::exists(path) || std::filesystem::file_size(path) != kBytes) {
    std::filesystem::create_directories(work);
    std::ofstream(path, std::ios::binary) << synthetic_corpus(kBytes, 2026);
  }
  return path;
}

// --- desk-scale training -----------------------------------------------------

ModelConfig desk_model(Variant v, std::uint64_t seed) {
  ModelConfig m;
  m.layers = 4;
  m.channels = 128;
  m.heads = 4;
  m.streams = v == Variant::kRc ? 1 : 4;
  m.context = 32;
  m.variant = v;
  m.seed = seed;
  return m;
}

TrainConfig desk_train(std::size_t iterations, std::uint64_t seed) {
  TrainConfig t;
  t.batch = 4;
  t.iterations = iterations;
  t.warmup = std::min<std::size_t>(100, iterations);
  t.eval_interval = 250;
  t.eval_batches = 4;
  t.snapshot_interval = 500;
  t.log_timing = false;
  t.seed = seed;
  return t;
}

double variance(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size());
}

double median(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size() / 2;
  return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

// --- criteria ----------------------------------------------------------------

Verdict norm_equality() {
  std::mt19937_64 rng(101);
  double worst = 0.0, worst_svd = 0.0;
  for (double peak : {0.3, 1.0, 2.5}) {
    for (int s = 0; s < 200; ++s) {
      const std::size_t n = 2 + static_cast<std::size_t>(rng() % 7);
      const auto consts = mf::ManifoldConstants::make(n);
      mf::ShcFactors f{haar_orthogonal(n - 1, rng), haar_orthogonal(n - 1, rng),
                       manifold::Vec(static_cast<Eigen::Index>(n - 1))};
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (Eigen::Index i = 0; i < f.sigma.size(); ++i) f.sigma(i) = u(rng);
      f.sigma *= peak / f.sigma.cwiseAbs().maxCoeff();
      const Mat h = mf::uniform_matrix(n) + mf::shc_displacement(f, consts);
      const double target = std::max(1.0, peak);
      worst = std::max(worst, std::abs(mf::spectral_norm(h) - target));
      worst_svd = std::max(worst_svd, std::abs(svd_norm(h) - target));
    }
  }
  return {worst <= 1e-8, "max |norm - max(1, max|sigma|)| = " + fmt(worst) + " (<= 1e-8; SVD " +
                             fmt(worst_svd) + ") over 3 x 200 factor sets"};
}

Verdict closure_chain() {
  std::mt19937_64 rng(202);
  double spec = 0.0, marg = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 7);
    std::vector<std::vector<Mat>> layers;
    for (int l = 0; l < 48; ++l) layers.push_back(generated(Variant::kShc, n, 8, 8, rng));
    for (const auto& p : diag::composite_chain(layers)) {
      spec = std::max(spec, p.spec_max_dev);
      marg = std::max(marg, p.marginal_max_dev);
    }
  }
  return {spec <= 1e-8 && marg <= 1e-9, "48-deep sHC products: |norm - 1| " + fmt(spec) +
                                            " (<= 1e-8), |row/col sum - 1| " + fmt(marg) +
                                            " (<= 1e-9), every prefix, 8 trials x 8 tokens"};
}

Verdict exactness_gap() {
  std::mt19937_64 rng(303);
  const std::size_t n = 4, samples = 100;
  std::normal_distribution<double> logit(0.0, 2.0);
  double sk_max = 0.0;
  std::size_t sk_above = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    Mat l(n, n);
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = logit(rng);
    const double dev = mf::marginal_deviation(mf::sinkhorn_knopp(l, 20), 1.0);
    sk_max = std::max(sk_max, dev);
    sk_above += dev > 1e-6;
  }
  double lite = 0.0, lite_neg = 0.0, shc = 0.0;
  for (const Mat& m : generated(Variant::kMhcLite, n, 8, samples, rng)) {
    lite = std::max(lite, mf::marginal_deviation(m, 1.0));
    lite_neg = std::max(lite_neg, -m.minCoeff());
  }
  for (const Mat& m : generated(Variant::kShc, n, 8, samples, rng)) {
    shc = std::max(shc, mf::marginal_deviation(m, 1.0));
  }
  const bool pass = sk_max > 1e-6 && lite <= 1e-11 && lite_neg <= 0.0 && shc <= 1e-9;
  return {pass, "SK@20 max deviation " + fmt(sk_max) + " (> 1e-6; " + std::to_string(sk_above) +
                    "/100 samples above), mHC-lite " + fmt(lite) + " (<= 1e-11), sHC " + fmt(shc) +
                    " (<= 1e-9)"};
}

Verdict generator_gradients() {
  std::mt19937_64 rng(404);
  const std::size_t n = 4, c = 8, t = 3;
  std::map<Variant, double> worst;
  for (int s = 0; s < 5; ++s) {
    for (Variant v : {Variant::kMhc, Variant::kMhcLite, Variant::kShc}) {
      // Projections at 1/sqrt(fan_in), biases N(0, 1), gates and gains near 1.
      VariantParams p = VariantParams::init(v, n, c);
      std::normal_distribution<double> weight(0.0, 1.0 / std::sqrt(double(n * c))), bias(0.0, 1.0),
          gain(1.0, 0.1);
      for (NamedParam& np : p.parameters("")) {
        auto& d = np.hc_weight ? weight
                  : (np.name.starts_with("alpha") || np.name == "norm_gain") ? gain
                                                                             : bias;
        for (double& x : np.tensor.mutable_data()) x = d(rng);
      }
      const Tensor x = gaussian({t, n, c}, rng, 1.0, true);
      const Tensor w = gaussian({c, c}, rng, 0.5);
      const Tensor probe = gaussian({t, n, c}, rng);
      std::vector<Tensor> inputs{x};
      for (const NamedParam& np : p.parameters("")) inputs.push_back(np.tensor);
      auto loss = [&] {
        const MixBundle b = generate_bundle(StreamState{x}, p);
        const StreamState y =
            hyper_step(StreamState{x}, [&](const Tensor& h) { return ad::tanh(ad::matmul(h, w)); }, b);
        return ad::sum(ad::mul(y.values, probe));
      };
      worst[v] = std::max(worst[v], ad::grad_check(loss, inputs, 1e-4));
    }
  }
  double all = 0.0;
  std::string detail;
  for (const auto& [v, e] : worst) {
    all = std::max(all, e);
    detail += std::string(detail.empty() ? "" : ", ") + std::string(variant_name(v)) + " " + fmt(e);
  }
  return {all < 1e-4, "relative error " + detail + " (< 1e-4), n=4 C=8 T=3, 5 draws each"};
}

Verdict identity_at_init() {
  std::mt19937_64 rng(505);
  const std::size_t n = 4, c = 8, tokens = 64;
  const Mat eye = Mat::Identity(n, n);
  auto fresh = [&](Variant v) {
    ad::NoGradGuard no_grad;
    const VariantParams p = VariantParams::init(v, n, c);
    const MixBundle b = generate_bundle(StreamState{gaussian({tokens, n, c}, rng)}, p);
    std::vector<Mat> out;
    for (std::size_t t = 0; t < tokens; ++t) out.push_back(token_matrix(b.h_res, t));
    return out;
  };
  double shc = 0.0, mhc = 0.0, lite = 1.0;
  for (const Mat& m : fresh(Variant::kShc)) shc = std::max(shc, (m - eye).cwiseAbs().maxCoeff());
  for (const Mat& m : fresh(Variant::kMhc)) mhc = std::max(mhc, (m - eye).cwiseAbs().maxCoeff());
  for (const Mat& m : fresh(Variant::kMhcLite)) lite = std::min(lite, m.diagonal().minCoeff());
  const double bound = (1.0 - std::tanh(4.0)) * (1.0 - 1.0 / static_cast<double>(n));
  const bool init_ok = shc <= 5.1e-4 && shc <= bound + 1e-15 && mhc <= 1.1e-2 && lite >= 0.992;

  const std::string corpus_text = synthetic_corpus(64 * 1024, 55);
  const std::vector<std::uint8_t> corpus(corpus_text.begin(), corpus_text.end());
  auto curve = [&](Variant v) {
    Model m(desk_model(v, 5));
    TrainConfig t = desk_train(50, 5);
    t.warmup = 10;
    t.eval_interval = 0;
    t.snapshot_interval = 0;
    std::vector<double> loss;
    for (const MetricsRow& r : train_loop(m, t, corpus).rows) loss.push_back(r.loss);
    return loss;
  };
  const std::vector<double> rc = curve(Variant::kRc);
  double gap = 0.0;
  std::string per;
  for (Variant v : {Variant::kHc, Variant::kMhc, Variant::kMhcLite, Variant::kShc}) {
    const std::vector<double> l = curve(v);
    double g = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) g = std::max(g, std::abs(l[i] - rc[i]));
    gap = std::max(gap, g);
    per += " " + std::string(variant_name(v)) + " " + fmt(g);
  }
  return {init_ok && gap <= 1e-2,
          "sHC max|H - I| " + fmt(shc) + " (<= 5.1e-4), mHC " + fmt(mhc) +
              " (<= 1.1e-2), mHC-lite min diag " + fmt(lite) +
              " (>= 0.992); 50-step loss gap vs RC:" + per + " (<= 1e-2)"};
}

Verdict parameter_scaling() {
  const std::uint64_t c = 768;
  auto res = [&](Variant v, std::uint64_t n) { return diag::param_count(v, n, c).residual; };
  auto fact = [](std::uint64_t n) {
    std::uint64_t f = 1;
    for (std::uint64_t i = 2; i <= n; ++i) f *= i;
    return f;
  };
  bool exact = res(Variant::kShc, 4) == 27662 && res(Variant::kMhcLite, 4) == 73753;
  bool growth = true;
  for (std::uint64_t n : {2, 4, 6, 8, 10}) {
    const std::uint64_t nc = n * c, k = (n - 1) * (n - 2) / 2;
    exact = exact && res(Variant::kShc, n) == 2 * (nc * k + k) + nc * (n - 1) + (n - 1) + 5;
    exact = exact && res(Variant::kMhc, n) == nc * n * n + n * n + 1;
    exact = exact && res(Variant::kMhcLite, n) == nc * fact(n) + fact(n) + 1;
    if (n >= 4) {
      const double cubic = static_cast<double>(res(Variant::kShc, n)) / double(n * n * n * c);
      const double fac = static_cast<double>(res(Variant::kMhcLite, n)) / double(n * fact(n) * c);
      growth = growth && cubic > 0.5 && cubic < 2.0 && std::abs(fac - 1.0) < 1e-3;
    }
  }
  const double ratio = static_cast<double>(res(Variant::kMhcLite, 8)) /
                       static_cast<double>(res(Variant::kShc, 8));
  return {exact && growth && ratio > 1000.0,
          "exact formula values " + std::string(exact ? "match" : "MISMATCH") + ", growth orders " +
              (growth ? "hold" : "FAIL") + "; n=8 C=768 mHC-lite/sHC residual " +
              std::to_string(res(Variant::kMhcLite, 8)) + "/" + std::to_string(res(Variant::kShc, 8)) +
              " = " + fmt(ratio) + " (> 1000)"};
}

std::filesystem::path run_dir(const std::filesystem::path& work, Variant v, std::uint64_t seed) {
  return work / "desk" / (std::string(variant_name(v)) + "_seed" + std::to_string(seed));
}

// Trains one desk run unless a finished one is already on disk.
std::vector<MetricsRow> desk_run(const std::filesystem::path& work, Variant v, std::uint64_t seed,
                                 const std::vector<std::uint8_t>& corpus, bool& nan_abort,
                                 bool* reused = nullptr) {
  const auto dir = run_dir(work, v, seed);
  const auto metrics = dir / kMetricsFile;
  const std::size_t iterations = 2000;
  std::vector<MetricsRow> rows;
  if (std::filesystem::exists(dir / kCheckpointFile)) {
    std::ifstream in(metrics);
    for (std::string line; std::getline(in, line);) {
      const auto j = nlohmann::json::parse(line);
      MetricsRow r;
      r.step = j["step"];
      r.loss = j["loss"];
      r.grad_norm = j["grad_norm"];
      rows.push_back(r);
    }
    if (rows.size() == iterations) {
      if (reused) *reused = true;
      return rows;
    }
    rows.clear();
  }
  Model m(desk_model(v, seed));
  TrainConfig t = desk_train(iterations, seed);
  t.out = dir;
  try {
    rows = train_loop(m, t, corpus).rows;
  } catch (const NanLossError&) {
    nan_abort = true;
  }
  return rows;
}

Verdict gradient_stability(const std::filesystem::path& work) {
  const auto corpus = read_corpus(desk_corpus(work));
  if (corpus.size() < (1u << 20)) return {false, "corpus smaller than 1 MB"};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<Variant> variants{Variant::kHc, Variant::kShc, Variant::kMhc, Variant::kMhcLite};
  std::map<Variant, std::vector<double>> var;
  bool constrained_nan = false;
  int cached = 0;
  std::string notes;
  for (Variant v : variants) {
    for (std::uint64_t s : seeds) {
      bool nan = false, reused = false;
      const auto rows = desk_run(work, v, s, corpus, nan, &reused);
      cached += reused;
      if (nan) {
        if (v != Variant::kHc) constrained_nan = true;
        notes += " " + std::string(variant_name(v)) + "/seed" + std::to_string(s) + " NaN";
        var[v].push_back(std::numeric_limits<double>::infinity());
        continue;
      }
      std::vector<double> g;
      for (const MetricsRow& r : rows) {
        if (r.step >= 100 && r.step <= 500) g.push_back(r.grad_norm);
      }
      var[v].push_back(variance(g));
    }
  }
  const double hc = median(var[Variant::kHc]);
  bool larger = true;
  std::string detail = "median grad-norm variance, steps 100-500, 3 seeds: hc " + fmt(hc);
  for (Variant v : {Variant::kShc, Variant::kMhc, Variant::kMhcLite}) {
    const double m = median(var[v]);
    larger = larger && hc > m;
    detail += ", " + std::string(variant_name(v)) + " " + fmt(m);
  }
  detail += larger ? " (hc largest)" : " (hc NOT largest)";
  detail += constrained_nan ? "; NaN abort in a constrained run" : "; no constrained NaN aborts";
  if (cached > 0) notes += "; reused " + std::to_string(cached) + " finished runs from " + work.string();
  return {larger && !constrained_nan, detail + notes};
}

Verdict diagnostics_pipeline(const std::filesystem::path& work, double& analysis_seconds) {
  const auto corpus_path = desk_corpus(work);
  const auto dir = run_dir(work, Variant::kShc, 1);
  if (!std::filesystem::exists(dir / kCheckpointFile)) {
    bool nan = false;
    desk_run(work, Variant::kShc, 1, read_corpus(corpus_path), nan);
    if (nan) return {false, "sHC desk run aborted on NaN"};
  }
  const auto out = work / "analysis";
  std::filesystem::remove_all(out);
  std::ostringstream so, se;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = cli::run({"analyze", "--checkpoint", (dir / kCheckpointFile).string(), "--corpus",
                             corpus_path.string(), "--out", out.string(), "--samples", "64"},
                            so, se);
  analysis_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (code != 0) return {false, "analyze exited " + std::to_string(code) + ": " + se.str()};

  auto rows = [&](const char* name) {
    std::ifstream in(out / name);
    std::vector<std::vector<std::string>> table;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::istringstream s(line);
      for (std::string cell; std::getline(s, cell, ',');) cells.push_back(cell);
      table.push_back(cells);
    }
    return table;
  };
  int present = 0;
  for (const char* f : {"fig2_rowmax.csv", "fig2_diagfrac.csv", "fig3_cosine.csv", "fig5_colsum.csv",
                        "fig5_specnorm.csv", "fig6_hist.csv", "fig7_params.csv"}) {
    present += rows(f).size() > 1;
  }
  double colsum = 0.0, marginal = 0.0, spec = 0.0;
  for (const auto& r : rows("fig5_colsum.csv")) {
    if (r.front() == "depth") continue;
    colsum = std::max({colsum, std::abs(std::stod(r[1]) - 1.0), std::abs(std::stod(r[2]) - 1.0)});
    marginal = std::max(marginal, std::stod(r[6]));
  }
  for (const auto& r : rows("fig5_specnorm.csv")) {
    if (r.front() == "depth") continue;
    spec = std::max(spec, std::stod(r[5]));
  }
  std::uint64_t negative = 0, total = 0;
  for (const auto& r : rows("fig6_hist.csv")) {
    if (r.front() == "bin_lo") continue;
    const std::uint64_t count = std::stoull(r[2]);
    total += count;
    if (r[1] == "inf") continue;
    if (std::stod(r[1]) <= 0.0) negative += count;
  }
  const bool pass = present == 7 && colsum <= 1e-9 && marginal <= 1e-9 && spec <= 1e-8 && negative > 0;
  return {pass, std::to_string(present) + "/7 CSVs; composite |colsum - 1| " + fmt(colsum) +
                    " (<= 1e-9), |norm - 1| " + fmt(spec) + " (<= 1e-8); histogram mass below 0: " +
                    std::to_string(negative) + "/" + std::to_string(total) + " entries (> 0)"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Verdict(const std::filesystem::path&, double&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::filesystem::path work = "acceptance_work";
  std::string which = "all";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--work" && i + 1 < args.size()) {
      work = args[++i];
    } else {
      which = args[i];
    }
  }
  auto timed = [](auto f) {
    return [f](const std::filesystem::path& w, double& secs) {
      const auto t0 = std::chrono::steady_clock::now();
      Verdict v = f(w);
      secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return v;
    };
  };
  const std::vector<Criterion> criteria{
      {1, "spectral norm equality", 5, timed([](auto&) { return norm_equality(); })},
      {2, "closure of composites", 10, timed([](auto&) { return closure_chain(); })},
      {3, "exactness gap", 5, timed([](auto&) { return exactness_gap(); })},
      {4, "generator gradients", 30, timed([](auto&) { return generator_gradients(); })},
      {5, "identity at init", 120, timed([](auto&) { return identity_at_init(); })},
      {6, "parameter scaling", 1, timed([](auto&) { return parameter_scaling(); })},
      {7, "gradient stability", 1800, timed([](const auto& w) { return gradient_stability(w); })},
      {8, "diagnostics pipeline", 120,
       [](const std::filesystem::path& w, double& secs) { return diagnostics_pipeline(w, secs); }},
  };
  bool all_pass = true, matched = false;
  for (const Criterion& c : criteria) {
    if (which != "all" && which != std::to_string(c.id)) continue;
    matched = true;
    double secs = 0.0;
    Verdict v;
    try {
      v = c.run(work, secs);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const bool in_time = secs < c.budget_s;
    const bool pass = v.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << "  " << c.name << ": "
              << v.detail << " [" << fmt(secs) << " s, budget " << c.budget_s << " s"
              << (in_time ? "" : ", OVER") << "]" << std::endl;
  }
  if (!matched) {
    std::cerr << "usage: hclab_acceptance <1..8|all> [--work DIR]\n";
    return 1;
  }
  return all_pass ? 0 : 1;
}
