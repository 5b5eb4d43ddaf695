// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Matrix sets used by the residual-mixing variants and their building blocks:
//
//   birkhoff       nonnegative, unit row and column sums
//   affine         unit row and column sums, any sign
//   zero_marginal  zero row and column sums
//   sphere         affine with spectral norm exactly 1
//
// Every affine matrix splits uniquely as J + Z with J the uniform matrix and Z
// zero-marginal, and ||J + Z||_2 = max(1, ||Z||_2).

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace hclab::manifold {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr int kDefaultSinkhornIters = 20;
inline constexpr std::size_t kMaxBvnStreams = 8;

struct ManifoldConstants {
  std::size_t n = 0;
  Mat uniform;  // J = (1/n) 11^T
  Mat helmert;  // U_Z, n x (n-1)

  static ManifoldConstants make(std::size_t n);
};

struct BvnBasis {
  std::size_t n = 0;
  std::vector<std::vector<int>> perms;  // one-line notation, lexicographic
  std::vector<Mat> matrices;            // P_i(r, perms[i][r]) = 1

  static BvnBasis make(std::size_t n);
  std::size_t size() const { return perms.size(); }
  // Row i holds vec(P_i) in row-major order: [n!, n*n].
  Mat stacked() const;
};

struct ShcFactors {
  Mat u_core;  // (n-1) x (n-1) orthogonal
  Mat v_core;
  Vec sigma;   // n-1 singular values
};

Mat uniform_matrix(std::size_t n);
Mat truncated_helmert(std::size_t n);

// Strict upper triangle filled row-major from v, lower triangle = -upper.
Mat skew_from_upper(const std::vector<double>& v, std::size_t m);

// (I - A)(I + A)^{-1}
Mat cayley(const Mat& skew);

struct SinkhornResult {
  Mat col_exact;  // final state, after a column normalization
  Mat row_exact;  // one half-step earlier, after a row normalization
};

// exp(logits), then `iters` rounds of row- then column-normalization.
SinkhornResult sinkhorn_knopp_detailed(const Mat& logits,
                                       int iters = kDefaultSinkhornIters);
Mat sinkhorn_knopp(const Mat& logits, int iters = kDefaultSinkhornIters);

Mat bvn_combine(const std::vector<double>& coeffs, const BvnBasis& basis);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline constexpr double kSpectralTol = 1e-12;
inline constexpr int kSpectralMaxIters = 10000;

// Largest singular value by power iteration on m^T m from a fixed seeded
// start vector.
SpectralNormResult spectral_norm_detailed(const Mat& m,
                                          double tol = kSpectralTol,
                                          int max_iters = kSpectralMaxIters);
double spectral_norm(const Mat& m, double tol = kSpectralTol,
                     int max_iters = kSpectralMaxIters);

// U_Z U_core diag(sigma) (U_Z V_core)^T, no bound on sigma.
Mat shc_displacement(const ShcFactors& factors, const ManifoldConstants& consts);
// J + displacement; requires orthogonal cores and max|sigma| <= 1.
Mat shc_residual(const ShcFactors& factors, const ManifoldConstants& consts);

enum class MatrixSet { kBirkhoff, kAffine, kZeroMarginal, kSphere };

MatrixSet parse_matrix_set(std::string_view name);
std::string_view to_string(MatrixSet set);

struct MembershipReport {
  bool member = false;
  double max_violation = 0.0;
};

MembershipReport membership(const Mat& m, MatrixSet set, double tol);

// Largest |row sum - target| or |column sum - target|.
double marginal_deviation(const Mat& m, double target);

}  // namespace hclab::manifold
