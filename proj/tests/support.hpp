// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests. The finite-difference and SVD oracles
// here are deliberately independent of the library's own checkers.

#pragma once

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "hclab/autodiff.hpp"
#include "hclab/manifold.hpp"

namespace hclab::test {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double sd = 1.0,
                                bool grad = false) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = d(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), grad);
}

inline manifold::Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  manifold::Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Central differences of a scalar function with respect to every entry of
// `x`, evaluated by perturbing x in place.
inline std::vector<double> numeric_grad(const std::function<double()>& f, ad::Tensor x,
                                        double eps) {
  std::vector<double> g(x.size());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = f();
    data[i] = saved - eps;
    const double down = f();
    data[i] = saved;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// max_i |a_i - n_i| / max(floor, |n_i|)
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                            double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) /
                                std::max(floor, std::abs(numeric[i])));
  }
  return worst;
}

inline double svd_norm(const manifold::Mat& m) {
  return Eigen::JacobiSVD<manifold::Mat>(m).singularValues()(0);
}

inline double max_abs(const manifold::Mat& m) { return m.cwiseAbs().maxCoeff(); }

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hclab_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace hclab::test
