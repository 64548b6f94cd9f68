#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace arraygp {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Squared-exponential kernel hyperparameters. noise_variance is the iid
// measurement-noise variance added on the system-matrix diagonal; it is not
// part of the kernel itself.
template <typename Scalar>
struct Hyperparameters {
  Scalar length_scale;
  Scalar signal_variance;
  Scalar noise_variance;

  Hyperparameters(Scalar l, Scalar sf2, Scalar sy2)
      : length_scale(l), signal_variance(sf2), noise_variance(sy2) {
    if (!(length_scale > Scalar(0)) || !std::isfinite(double(length_scale))) {
      throw std::invalid_argument("length_scale must be positive and finite");
    }
    if (!(signal_variance > Scalar(0)) || !std::isfinite(double(signal_variance))) {
      throw std::invalid_argument("signal_variance must be positive and finite");
    }
    if (!(noise_variance >= Scalar(0)) || !std::isfinite(double(noise_variance))) {
      throw std::invalid_argument("noise_variance must be non-negative and finite");
    }
  }
};

// k(a, b) = sf2 * exp(-|a - b|^2 / (2 l^2)). Points are column vectors.
template <typename DerivedA, typename DerivedB,
          typename Scalar = typename DerivedA::Scalar>
Scalar se_kernel(const Eigen::MatrixBase<DerivedA>& a,
                 const Eigen::MatrixBase<DerivedB>& b,
                 const Hyperparameters<Scalar>& h) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("se_kernel: point dimensions differ");
  }
  const Scalar r2 = (a - b).squaredNorm();
  return h.signal_variance *
         std::exp(-r2 / (Scalar(2) * h.length_scale * h.length_scale));
}

// Cross-kernel matrix; columns of A and B are points. Entry (i, j) is
// se_kernel(A.col(i), B.col(j)). For A == B the result is symmetric PSD.
template <typename DerivedA, typename DerivedB,
          typename Scalar = typename DerivedA::Scalar>
MatrixX<Scalar> kernel_matrix(const Eigen::MatrixBase<DerivedA>& A,
                              const Eigen::MatrixBase<DerivedB>& B,
                              const Hyperparameters<Scalar>& h) {
  if (A.rows() != B.rows()) {
    throw std::invalid_argument("kernel_matrix: point dimensions differ");
  }
  MatrixX<Scalar> K(A.cols(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.cols(); ++i) {
      K(i, j) = se_kernel(A.col(i), B.col(j), h);
    }
  }
  return K;
}

// Gradient of the kernel with respect to the evaluation point, stacked as a
// (d * #eval) x #train block matrix: rows [i*d, (i+1)*d) and column j hold
//   d k(e_i, t_j) / d e_i = -(e_i - t_j) * (sf2 / l^2) * exp(-|e_i - t_j|^2 / (2 l^2)).
template <typename DerivedT, typename DerivedE,
          typename Scalar = typename DerivedT::Scalar>
MatrixX<Scalar> kernel_input_gradient(const Eigen::MatrixBase<DerivedT>& train,
                                      const Eigen::MatrixBase<DerivedE>& eval,
                                      const Hyperparameters<Scalar>& h) {
  if (train.rows() != eval.rows()) {
    throw std::invalid_argument("kernel_input_gradient: point dimensions differ");
  }
  const Eigen::Index d = train.rows();
  const Scalar inv_l2 = Scalar(1) / (h.length_scale * h.length_scale);
  MatrixX<Scalar> G(d * eval.cols(), train.cols());
  VectorX<Scalar> diff(d);
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    for (Eigen::Index i = 0; i < eval.cols(); ++i) {
      diff = eval.col(i) - train.col(j);
      const Scalar k = h.signal_variance *
                       std::exp(-diff.squaredNorm() * Scalar(0.5) * inv_l2);
      G.block(i * d, j, d, 1) = -diff * (inv_l2 * k);
    }
  }
  return G;
}

}  // namespace arraygp
