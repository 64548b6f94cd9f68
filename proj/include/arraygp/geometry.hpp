#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "arraygp/kernel.hpp"
#include "arraygp/random.hpp"

namespace arraygp {

// Body-frame sensor offsets of a rigid array. The centroid is re-centered to
// zero at construction so the array center is the mean sensor position.
template <typename Scalar>
struct ArrayGeometry {
  MatrixX<Scalar> offsets;  // d x m

  explicit ArrayGeometry(MatrixX<Scalar> body_offsets) {
    if (body_offsets.cols() < 1) {
      throw std::invalid_argument("ArrayGeometry: need at least one sensor");
    }
    if (!body_offsets.allFinite()) {
      throw std::invalid_argument("ArrayGeometry: non-finite offsets");
    }
    const VectorX<Scalar> centroid = body_offsets.rowwise().mean();
    offsets = body_offsets.colwise() - centroid;
  }

  Eigen::Index sensor_count() const { return offsets.cols(); }
  Eigen::Index dim() const { return offsets.rows(); }
};

// Array-center position plus orientation. For d < 3 the rotation acts on the
// embedded subspace (a 1x1 or 2x2 orthonormal matrix with det +1).
template <typename Scalar>
struct Pose {
  VectorX<Scalar> center;
  MatrixX<Scalar> rotation;

  Pose(VectorX<Scalar> c, MatrixX<Scalar> R)
      : center(std::move(c)), rotation(std::move(R)) {
    const Eigen::Index d = center.size();
    if (rotation.rows() != d || rotation.cols() != d) {
      throw std::invalid_argument("Pose: rotation shape does not match center dimension");
    }
    if (!center.allFinite() || !rotation.allFinite()) {
      throw std::invalid_argument("Pose: non-finite entries");
    }
    const MatrixX<Scalar> gram = rotation.transpose() * rotation;
    if (!gram.isApprox(MatrixX<Scalar>::Identity(d, d), Scalar(1e-9))) {
      throw std::invalid_argument("Pose: rotation is not orthonormal");
    }
    if (std::abs(double(rotation.determinant()) - 1.0) > 1e-9) {
      throw std::invalid_argument("Pose: rotation determinant is not +1");
    }
  }

  Eigen::Index dim() const { return center.size(); }
};

enum class NoiseStructure { Independent, ArrayCorrelated };

inline const char* to_string(NoiseStructure s) {
  return s == NoiseStructure::Independent ? "Independent" : "ArrayCorrelated";
}

// Input-noise covariance with its correlation structure: Independent draws a
// fresh position error per sensor reading, ArrayCorrelated shares one draw
// across all sensors of a timestep (the rigid-array case).
template <typename Scalar>
struct NoiseModel {
  MatrixX<Scalar> sigma_x;  // d x d PSD
  NoiseStructure structure = NoiseStructure::ArrayCorrelated;

  NoiseModel(MatrixX<Scalar> sigma, NoiseStructure s)
      : sigma_x(std::move(sigma)), structure(s) {
    psd_sqrt<Scalar>(sigma_x, "sigma_x");  // validates symmetry and PSD-ness
  }

  Eigen::Index dim() const { return sigma_x.rows(); }

  static NoiseModel isotropic(Eigen::Index d, Scalar variance, NoiseStructure s) {
    return NoiseModel(MatrixX<Scalar>::Identity(d, d) * variance, s);
  }
};

// H = 1_m (x) I_d: m stacked d x d identity blocks.
template <typename Scalar = double>
MatrixX<Scalar> h_matrix(Eigen::Index m, Eigen::Index d) {
  if (m < 1 || d < 1) {
    throw std::invalid_argument("h_matrix: m and d must be at least 1");
  }
  MatrixX<Scalar> H = MatrixX<Scalar>::Zero(d * m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    H.block(i * d, 0, d, d) = MatrixX<Scalar>::Identity(d, d);
  }
  return H;
}

// Navigation-frame sensor positions: column i is center + R * offsets[i].
template <typename Scalar>
MatrixX<Scalar> sensor_positions(const Pose<Scalar>& pose,
                                 const ArrayGeometry<Scalar>& geom) {
  if (pose.dim() != geom.dim()) {
    throw std::invalid_argument("sensor_positions: pose and geometry dimensions differ");
  }
  return (pose.rotation * geom.offsets).colwise() + pose.center;
}

// Joint covariance of the stacked input locations over m sensors and N
// timesteps: blockdiag of Sigma_x (Independent) or I_N (x) (H Sigma_x H^T)
// (ArrayCorrelated). Dense; intended for small sizes and tests — the solver
// path assembles the projected n x n term per timestep block instead.
template <typename Scalar>
MatrixX<Scalar> joint_input_covariance(const NoiseModel<Scalar>& noise,
                                       Eigen::Index m, Eigen::Index N,
                                       Eigen::Index d) {
  if (m < 1 || N < 1 || d < 1 || noise.dim() != d) {
    throw std::invalid_argument("joint_input_covariance: inconsistent dimensions");
  }
  const Eigen::Index n = d * m * N;
  MatrixX<Scalar> J = MatrixX<Scalar>::Zero(n, n);
  for (Eigen::Index k = 0; k < N; ++k) {
    const Eigen::Index base = k * d * m;
    if (noise.structure == NoiseStructure::Independent) {
      for (Eigen::Index i = 0; i < m; ++i) {
        J.block(base + i * d, base + i * d, d, d) = noise.sigma_x;
      }
    } else {
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
          J.block(base + i * d, base + j * d, d, d) = noise.sigma_x;
        }
      }
    }
  }
  return J;
}

// Adds position noise to per-timestep sensor positions (each entry d x m).
// ArrayCorrelated: one draw per timestep shared by all of its sensors.
template <typename Scalar>
std::vector<MatrixX<Scalar>> perturb_positions(
    const std::vector<MatrixX<Scalar>>& positions,
    const NoiseModel<Scalar>& noise, Rng& rng) {
  const MatrixX<Scalar> B = psd_sqrt<Scalar>(noise.sigma_x, "sigma_x");
  const Eigen::Index d = noise.dim();
  std::vector<MatrixX<Scalar>> out;
  out.reserve(positions.size());
  for (const auto& pos : positions) {
    if (pos.rows() != d) {
      throw std::invalid_argument("perturb_positions: position dimension differs from sigma_x");
    }
    MatrixX<Scalar> noisy = pos;
    if (noise.structure == NoiseStructure::ArrayCorrelated) {
      const VectorX<Scalar> e = B * standard_normal<Scalar>(d, rng);
      noisy.colwise() += e;
    } else {
      for (Eigen::Index i = 0; i < pos.cols(); ++i) {
        noisy.col(i) += B * standard_normal<Scalar>(d, rng);
      }
    }
    out.push_back(std::move(noisy));
  }
  return out;
}

template <typename Scalar>
std::vector<MatrixX<Scalar>> perturb_positions(
    const std::vector<MatrixX<Scalar>>& positions,
    const NoiseModel<Scalar>& noise, std::uint64_t seed) {
  Rng rng(seed);
  return perturb_positions(positions, noise, rng);
}

}  // namespace arraygp
