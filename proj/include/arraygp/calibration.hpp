#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "arraygp/gp.hpp"  // center_outputs

namespace arraygp {

// Per-sensor soft-iron distortion and hard-iron bias, applied as
// D^-1 (y_raw - b) before taking the magnitude. Parameters are given, never
// estimated here.
template <typename Scalar>
struct SensorCalibration {
  Eigen::Matrix<Scalar, 3, 3> distortion;
  Eigen::Matrix<Scalar, 3, 1> bias;
};

enum class NormMode { SquaredNorm, Norm };

inline const char* to_string(NormMode m) {
  return m == NormMode::SquaredNorm ? "squared" : "norm";
}

// Scalar GP output from one raw triaxial reading. Default is the squared
// two-norm |D^-1 (y - b)|^2; NormMode::Norm selects the plain magnitude.
template <typename Scalar>
Scalar apply_calibration(const Eigen::Matrix<Scalar, 3, 1>& raw,
                         const SensorCalibration<Scalar>& cal,
                         NormMode mode = NormMode::SquaredNorm) {
  const Scalar det = cal.distortion.determinant();
  if (!(std::abs(double(det)) > 1e-12)) {
    throw std::invalid_argument("apply_calibration: distortion matrix is singular");
  }
  const Eigen::Matrix<Scalar, 3, 1> v =
      cal.distortion.partialPivLu().solve(raw - cal.bias);
  return mode == NormMode::SquaredNorm ? v.squaredNorm() : v.norm();
}

}  // namespace arraygp
