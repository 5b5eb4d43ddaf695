// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/manifold.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace hclab::manifold {
namespace {

void require_streams(std::size_t n, const char* what) {
  if (n < 2) {
    throw ContractError(std::string(what) + " needs n >= 2, got " +
                        std::to_string(n));
  }
}

bool is_orthogonal(const Mat& q, double tol) {
  if (q.rows() != q.cols()) return false;
  const Mat gram = q.transpose() * q;
  return (gram - Mat::Identity(q.rows(), q.cols())).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

ManifoldConstants ManifoldConstants::make(std::size_t n) {
  return {n, uniform_matrix(n), truncated_helmert(n)};
}

Mat uniform_matrix(std::size_t n) {
  require_streams(n, "uniform_matrix");
  return Mat::Constant(n, n, 1.0 / static_cast<double>(n));
}

Mat truncated_helmert(std::size_t n) {
  require_streams(n, "truncated_helmert");
  // Helmert row j (1-based, j >= 2): (1, ..., 1, -(j-1), 0, ...) / sqrt(j(j-1)),
  // placed here as column j-2.
  Mat u = Mat::Zero(n, n - 1);
  for (std::size_t j = 2; j <= n; ++j) {
    const double norm = std::sqrt(static_cast<double>(j * (j - 1)));
    for (std::size_t i = 0; i + 1 < j; ++i) u(i, j - 2) = 1.0 / norm;
    u(j - 1, j - 2) = -static_cast<double>(j - 1) / norm;
  }
  return u;
}

Mat skew_from_upper(const std::vector<double>& v, std::size_t m) {
  if (m == 0 || v.size() != m * (m - 1) / 2) {
    throw ContractError("skew_from_upper: " + std::to_string(v.size()) +
                        " entries cannot fill a " + std::to_string(m) + "x" +
                        std::to_string(m) + " strict upper triangle");
  }
  Mat a = Mat::Zero(m, m);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j, ++idx) {
      a(i, j) = v[idx];
      a(j, i) = -v[idx];
    }
  }
  return a;
}

Mat cayley(const Mat& skew) {
  if (skew.rows() != skew.cols() ||
      (skew + skew.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ContractError("cayley: input is not skew-symmetric");
  }
  const Mat eye = Mat::Identity(skew.rows(), skew.cols());
  // I + A is nonsingular for skew A (eigenvalues 1 + i*lambda).
  return (eye - skew) * (eye + skew).partialPivLu().inverse();
}

SinkhornResult sinkhorn_knopp_detailed(const Mat& logits, int iters) {
  if (iters < 1) throw ContractError("sinkhorn_knopp needs iters >= 1");
  if (!logits.allFinite()) throw ContractError("sinkhorn_knopp: non-finite logits");
  Mat m = logits.array().exp().matrix();
  Mat row_exact = m;
  for (int it = 0; it < iters; ++it) {
    m = m.array().colwise() / m.rowwise().sum().array();
    row_exact = m;
    m = m.array().rowwise() / m.colwise().sum().array();
  }
  return {m, row_exact};
}

Mat sinkhorn_knopp(const Mat& logits, int iters) {
  return sinkhorn_knopp_detailed(logits, iters).col_exact;
}

BvnBasis BvnBasis::make(std::size_t n) {
  if (n == 0) throw ContractError("BvnBasis needs n >= 1");
  if (n > kMaxBvnStreams) {
    throw CapacityError("Birkhoff-von Neumann basis limited to n <= " +
                        std::to_string(kMaxBvnStreams) + ", got " +
                        std::to_string(n));
  }
  BvnBasis basis;
  basis.n = n;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    Mat p = Mat::Zero(n, n);
    for (std::size_t r = 0; r < n; ++r) p(r, perm[r]) = 1.0;
    basis.perms.push_back(perm);
    basis.matrices.push_back(std::move(p));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return basis;
}

Mat BvnBasis::stacked() const {
  Mat out = Mat::Zero(perms.size(), n * n);
  for (std::size_t i = 0; i < perms.size(); ++i) {
    for (std::size_t r = 0; r < n; ++r) out(i, r * n + perms[i][r]) = 1.0;
  }
  return out;
}

Mat bvn_combine(const std::vector<double>& coeffs, const BvnBasis& basis) {
  if (basis.n > kMaxBvnStreams) {
    throw CapacityError("bvn_combine limited to n <= 8");
  }
  if (coeffs.size() != basis.size()) {
    throw ContractError("bvn_combine: " + std::to_string(coeffs.size()) +
                        " coefficients for a basis of " +
                        std::to_string(basis.size()));
  }
  double total = 0.0;
  for (double c : coeffs) {
    if (c < 0.0) throw ContractError("bvn_combine: negative coefficient");
    total += c;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ContractError("bvn_combine: coefficients sum to " + std::to_string(total));
  }
  Mat out = Mat::Zero(basis.n, basis.n);
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    for (std::size_t r = 0; r < basis.n; ++r) out(r, basis.perms[i][r]) += coeffs[i];
  }
  return out;
}

SpectralNormResult spectral_norm_detailed(const Mat& m, double tol, int max_iters) {
  if (!m.allFinite()) throw ContractError("spectral_norm: non-finite entries");
  SpectralNormResult result;
  if (m.size() == 0) {
    result.converged = true;
    return result;
  }
  const Mat gram = m.transpose() * m;
  const double scale = gram.cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    result.converged = true;
    return result;
  }

  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  Vec start(gram.rows());
  for (Eigen::Index i = 0; i < start.size(); ++i) start(i) = unit(rng);
  start.normalize();

  // Iteration k applies gram^(2^k) to the start vector: the power matrix is
  // squared (and rescaled) each round, so near-degenerate leading singular
  // values converge in a few dozen rounds.
  // The stopping test is on the eigen-residual, which bounds the error of
  // lambda; successive estimates can agree to 1e-12 while still far off.
  Mat power = gram / scale;
  for (int it = 1; it <= max_iters; ++it) {
    Vec v = power * start;
    const double norm = v.norm();
    if (norm == 0.0 || !std::isfinite(norm)) break;
    v /= norm;
    const Vec gv = gram * v;
    const double lambda = v.dot(gv);
    result.value = std::sqrt(std::max(0.0, lambda));
    result.iterations = it;
    if ((gv - lambda * v).norm() <= tol * scale) {
      result.converged = true;
      break;
    }
    power = power * power;
    const double peak = power.cwiseAbs().maxCoeff();
    if (peak == 0.0 || !std::isfinite(peak)) break;
    power /= peak;
  }
  return result;
}

double spectral_norm(const Mat& m, double tol, int max_iters) {
  return spectral_norm_detailed(m, tol, max_iters).value;
}

Mat shc_displacement(const ShcFactors& f, const ManifoldConstants& c) {
  const Eigen::Index m = static_cast<Eigen::Index>(c.n) - 1;
  if (f.u_core.rows() != m || f.u_core.cols() != m || f.v_core.rows() != m ||
      f.v_core.cols() != m || f.sigma.size() != m) {
    throw ContractError("shc factors do not match n=" + std::to_string(c.n));
  }
  const Mat u = c.helmert * f.u_core;
  const Mat v = c.helmert * f.v_core;
  return u * f.sigma.asDiagonal() * v.transpose();
}

Mat shc_residual(const ShcFactors& f, const ManifoldConstants& c) {
  if (!is_orthogonal(f.u_core, 1e-10) || !is_orthogonal(f.v_core, 1e-10)) {
    throw ContractError("shc_residual: core factors are not orthogonal");
  }
  if (f.sigma.size() > 0 && f.sigma.cwiseAbs().maxCoeff() > 1.0) {
    throw ContractError("shc_residual: singular values exceed 1");
  }
  return c.uniform + shc_displacement(f, c);
}

MatrixSet parse_matrix_set(std::string_view name) {
  if (name == "birkhoff") return MatrixSet::kBirkhoff;
  if (name == "affine") return MatrixSet::kAffine;
  if (name == "zero_marginal") return MatrixSet::kZeroMarginal;
  if (name == "sphere") return MatrixSet::kSphere;
  throw std::invalid_argument("unknown matrix set: " + std::string(name));
}

std::string_view to_string(MatrixSet set) {
  switch (set) {
    case MatrixSet::kBirkhoff: return "birkhoff";
    case MatrixSet::kAffine: return "affine";
    case MatrixSet::kZeroMarginal: return "zero_marginal";
    case MatrixSet::kSphere: return "sphere";
  }
  return "?";
}

double marginal_deviation(const Mat& m, double target) {
  if (m.size() == 0) return 0.0;
  const double rows = (m.rowwise().sum().array() - target).abs().maxCoeff();
  const double cols = (m.colwise().sum().array() - target).abs().maxCoeff();
  return std::max(rows, cols);
}

MembershipReport membership(const Mat& m, MatrixSet set, double tol) {
  double violation = 0.0;
  switch (set) {
    case MatrixSet::kBirkhoff:
      violation = std::max(marginal_deviation(m, 1.0), std::max(0.0, -m.minCoeff()));
      break;
    case MatrixSet::kAffine:
      violation = marginal_deviation(m, 1.0);
      break;
    case MatrixSet::kZeroMarginal:
      violation = marginal_deviation(m, 0.0);
      break;
    case MatrixSet::kSphere:
      violation = std::max(marginal_deviation(m, 1.0),
                           std::abs(spectral_norm(m) - 1.0));
      break;
  }
  return {violation <= tol, violation};
}

}  // namespace hclab::manifold
