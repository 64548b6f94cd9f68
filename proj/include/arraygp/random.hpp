#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace arraygp {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Hierarchical seed derivation. Children streams are keyed on (label, index)
// so that adding sweep cells or runs never shifts the draws of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t label,
                                 std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(master ^ 0xA5A5A5A5A5A5A5A5ULL);
  s = splitmix64(s ^ splitmix64(label));
  s = splitmix64(s ^ splitmix64(index ^ 0x0123456789ABCDEFULL));
  return s;
}

// Stable 64-bit key for a sweep value (keys cells by value, not position).
inline std::uint64_t seed_key(double value) {
  return std::bit_cast<std::uint64_t>(value);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<Scalar> gauss(Scalar(0), Scalar(1));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = gauss(rng);
  return z;
}

// Symmetric PSD square root B with B B^T = S, via eigendecomposition so that
// rank-deficient covariances (e.g. diag(b, b, 0)) are handled without
// special-casing. Throws std::invalid_argument when S is not PSD.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> psd_sqrt(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& S,
    const char* name = "matrix") {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (S.rows() != S.cols()) {
    throw std::invalid_argument(std::string(name) + " must be square");
  }
  if (!S.allFinite()) {
    throw std::invalid_argument(std::string(name) + " has non-finite entries");
  }
  if (S.size() > 0 && !S.isApprox(S.transpose(), Scalar(1e-9))) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const auto& lambda = es.eigenvalues();
  const Scalar scale = S.size() > 0 ? lambda.cwiseAbs().maxCoeff() : Scalar(0);
  if (S.size() > 0 && lambda.minCoeff() < -Scalar(1e-12) * std::max(scale, Scalar(1))) {
    throw std::invalid_argument(std::string(name) + " is not positive semidefinite");
  }
  return es.eigenvectors() *
         lambda.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

}  // namespace arraygp
