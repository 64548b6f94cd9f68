#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arraygp/errors.hpp"
#include "arraygp/kernel.hpp"
#include "arraygp/random.hpp"

namespace arraygp {

// Centers a vector in two passes so the residual mean is at rounding level
// even for outputs with a large common offset. Returns (centered, mean).
template <typename Scalar>
std::pair<VectorX<Scalar>, Scalar> center_outputs(const VectorX<Scalar>& values) {
  if (values.size() == 0) {
    throw std::invalid_argument("center_outputs: empty input");
  }
  const Scalar m1 = values.mean();
  VectorX<Scalar> centered = values.array() - m1;
  const Scalar m2 = centered.mean();
  centered.array() -= m2;
  return {std::move(centered), m1 + m2};
}

// Stacked training data. `inputs` has one point per column; `outputs` is the
// centered measurement vector with the subtracted mean kept alongside.
// `groups` partitions point indices by timestep (all sensors of one array
// reading share a group); points without array structure get singleton groups.
template <typename Scalar>
struct TrainingSet {
  MatrixX<Scalar> inputs;   // d x n
  VectorX<Scalar> outputs;  // length n, centered
  Scalar output_mean = Scalar(0);
  std::vector<std::vector<Eigen::Index>> groups;

  Eigen::Index size() const { return inputs.cols(); }
  Eigen::Index dim() const { return inputs.rows(); }

  static TrainingSet from_raw(MatrixX<Scalar> points, const VectorX<Scalar>& raw_outputs,
                              std::vector<std::vector<Eigen::Index>> timestep_groups = {}) {
    const Eigen::Index n = points.cols();
    const Eigen::Index d = points.rows();
    if (d < 1 || d > 3) {
      throw std::invalid_argument("TrainingSet: input dimension must be 1, 2 or 3");
    }
    if (raw_outputs.size() != n) {
      throw std::invalid_argument("TrainingSet: inputs and outputs disagree in length");
    }
    if (n == 0) {
      throw std::invalid_argument("TrainingSet: empty data");
    }
    if (!points.allFinite() || !raw_outputs.allFinite()) {
      throw std::invalid_argument("TrainingSet: non-finite values");
    }
    if (timestep_groups.empty()) {
      timestep_groups.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) timestep_groups[i] = {i};
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    Eigen::Index covered = 0;
    for (const auto& g : timestep_groups) {
      for (Eigen::Index idx : g) {
        if (idx < 0 || idx >= n || seen[static_cast<std::size_t>(idx)]) {
          throw std::invalid_argument("TrainingSet: groups are not a partition of the indices");
        }
        seen[static_cast<std::size_t>(idx)] = 1;
        ++covered;
      }
    }
    if (covered != n) {
      throw std::invalid_argument("TrainingSet: groups do not cover all indices");
    }
    TrainingSet set;
    set.inputs = std::move(points);
    auto [centered, mean] = center_outputs(raw_outputs);
    set.outputs = std::move(centered);
    set.output_mean = mean;
    set.groups = std::move(timestep_groups);
    return set;
  }
};

// Posterior over a list of prediction points, in centered output space.
// `covariance` is the full matrix (empty when only the diagonal was
// requested); `variance_raw` is the unclamped diagonal. variance() clamps
// small negative round-off to zero for reporting.
template <typename Scalar>
struct Posterior {
  VectorX<Scalar> mean;
  MatrixX<Scalar> covariance;
  VectorX<Scalar> variance_raw;

  VectorX<Scalar> variance() const { return variance_raw.cwiseMax(Scalar(0)); }
};

struct PredictOptions {
  bool full_covariance = true;
};

namespace detail {

template <typename Scalar>
struct SpdFactor {
  Eigen::LLT<MatrixX<Scalar>> llt;
  bool jittered = false;
  Scalar jitter = Scalar(0);
};

// Cholesky with the documented jitter policy: factor the matrix as-is and add
// 1e-9 * sf2 on the diagonal only if that fails. A second failure is a hard
// numerical error carrying a condition diagnostic.
template <typename Scalar>
SpdFactor<Scalar> factor_spd(MatrixX<Scalar> C, Scalar signal_variance,
                             const char* context, int iteration = -1) {
  SpdFactor<Scalar> f;
  f.llt.compute(C);
  if (f.llt.info() == Eigen::Success) return f;
  f.jitter = Scalar(1e-9) * signal_variance;
  C.diagonal().array() += f.jitter;
  f.llt.compute(C);
  f.jittered = true;
  if (f.llt.info() == Eigen::Success) return f;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(C, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << context << ": Cholesky factorization failed after jitter "
      << double(f.jitter) << " (n=" << C.rows();
  if (es.info() == Eigen::Success && C.rows() > 0) {
    msg << ", eigenvalue range [" << double(es.eigenvalues().minCoeff()) << ", "
        << double(es.eigenvalues().maxCoeff()) << "]";
  }
  msg << ")";
  throw NumericalError(msg.str(), iteration);
}

// System matrix K(X, X) + sy2 I of the exact GP.
template <typename Scalar>
MatrixX<Scalar> system_matrix(const TrainingSet<Scalar>& train,
                              const Hyperparameters<Scalar>& h) {
  MatrixX<Scalar> C = kernel_matrix(train.inputs, train.inputs, h);
  C.diagonal().array() += h.noise_variance;
  return C;
}

// Shared posterior evaluation given a factored system matrix.
template <typename Scalar>
Posterior<Scalar> posterior_from_factor(const TrainingSet<Scalar>& train,
                                        const MatrixX<Scalar>& predict,
                                        const Hyperparameters<Scalar>& h,
                                        const SpdFactor<Scalar>& factor,
                                        const PredictOptions& opts) {
  Posterior<Scalar> post;
  const Eigen::Index p = predict.cols();
  if (p == 0) {
    post.mean.resize(0);
    post.covariance.resize(0, 0);
    post.variance_raw.resize(0);
    return post;
  }
  const VectorX<Scalar> alpha = factor.llt.solve(train.outputs);
  const MatrixX<Scalar> Ks = kernel_matrix(train.inputs, predict, h);
  post.mean = Ks.transpose() * alpha;
  MatrixX<Scalar> V = Ks;
  factor.llt.matrixL().solveInPlace(V);
  if (opts.full_covariance) {
    MatrixX<Scalar> G = MatrixX<Scalar>::Zero(p, p);
    G.template selfadjointView<Eigen::Lower>().rankUpdate(V.transpose());
    G.template triangularView<Eigen::StrictlyUpper>() =
        G.template triangularView<Eigen::StrictlyLower>().transpose();
    post.covariance = kernel_matrix(predict, predict, h) - G;
    post.variance_raw = post.covariance.diagonal();
  } else {
    post.covariance.resize(0, 0);
    post.variance_raw.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      post.variance_raw[i] = h.signal_variance - V.col(i).squaredNorm();
    }
  }
  return post;
}

}  // namespace detail

// Exact GP posterior, optionally with an additive symmetric PSD noise matrix
// on top of K + sy2 I (the heteroskedastic input-noise term).
template <typename Scalar>
Posterior<Scalar> gp_posterior(const TrainingSet<Scalar>& train,
                               const MatrixX<Scalar>& predict,
                               const Hyperparameters<Scalar>& h,
                               const MatrixX<std::type_identity_t<Scalar>>* extra_noise = nullptr,
                               const PredictOptions& opts = {}) {
  if (predict.cols() > 0 && predict.rows() != train.dim()) {
    throw std::invalid_argument("gp_posterior: prediction dimension differs from training data");
  }
  MatrixX<Scalar> C = detail::system_matrix(train, h);
  if (extra_noise != nullptr) {
    if (extra_noise->rows() != train.size() || extra_noise->cols() != train.size()) {
      throw std::invalid_argument("gp_posterior: extra_noise must be n x n");
    }
    if (!extra_noise->isApprox(extra_noise->transpose(), Scalar(1e-9))) {
      throw std::invalid_argument("gp_posterior: extra_noise must be symmetric");
    }
    C += (Scalar(0.5) * (*extra_noise + extra_noise->transpose()));
  }
  const auto factor = detail::factor_spd(std::move(C), h.signal_variance, "gp_posterior");
  return detail::posterior_from_factor(train, predict, h, factor, opts);
}

// Negative log marginal likelihood
//   0.5 y^T (K + sy2 I)^-1 y + 0.5 log det(K + sy2 I) + (n/2) log(2 pi).
template <typename Scalar>
Scalar nlml(const TrainingSet<Scalar>& train, const Hyperparameters<Scalar>& h) {
  const Eigen::Index n = train.size();
  const auto factor = detail::factor_spd(detail::system_matrix(train, h),
                                         h.signal_variance, "nlml");
  VectorX<Scalar> w = train.outputs;
  factor.llt.matrixL().solveInPlace(w);
  const Scalar quad = w.squaredNorm();
  Scalar logdet = Scalar(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    logdet += std::log(factor.llt.matrixL()(i, i));
  }
  logdet *= Scalar(2);
  return Scalar(0.5) * quad + Scalar(0.5) * logdet +
         Scalar(0.5) * Scalar(n) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
struct HyperBounds {
  std::pair<Scalar, Scalar> length_scale{Scalar(1e-3), Scalar(1e3)};
  std::pair<Scalar, Scalar> signal_variance{Scalar(1e-8), Scalar(1e4)};
  std::pair<Scalar, Scalar> noise_variance{Scalar(1e-10), Scalar(1e2)};
};

template <typename Scalar>
struct FitOptions {
  int starts = 5;                 // multi-start count, start 0 is the caller's init
  int max_evals_per_start = 300;  // NLML evaluation budget per start
  std::uint64_t seed = 0x9E3779B9ULL;
  Scalar ftol = Scalar(1e-10);
};

template <typename Scalar>
struct FitResult {
  Hyperparameters<Scalar> hyper;
  Scalar nlml_value;
  bool converged;   // false when the winning start exhausted its budget
  int evaluations;  // total NLML evaluations over all starts
  int winning_start;
};

namespace detail {

// Minimal Nelder-Mead on an n-dimensional objective. Returns the best vertex
// ever accepted; the best value is monotonically non-increasing, so starting
// at a minimizer returns it unchanged.
template <typename Scalar, typename F>
struct NmResult {
  VectorX<Scalar> x;
  Scalar fx;
  int evaluations;
  bool converged;
};

template <typename Scalar, typename F>
NmResult<Scalar, F> nelder_mead(F&& f, const VectorX<Scalar>& x0, Scalar step,
                                int max_evals, Scalar ftol) {
  const int n = static_cast<int>(x0.size());
  int evals = 0;
  auto eval = [&](const VectorX<Scalar>& x) {
    ++evals;
    return f(x);
  };

  std::vector<VectorX<Scalar>> xs(static_cast<std::size_t>(n) + 1, x0);
  std::vector<Scalar> fs(static_cast<std::size_t>(n) + 1);
  fs[0] = eval(xs[0]);
  for (int i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i) + 1][i] += step;
    fs[static_cast<std::size_t>(i) + 1] = eval(xs[static_cast<std::size_t>(i) + 1]);
  }

  std::vector<int> order(static_cast<std::size_t>(n) + 1);
  bool converged = false;
  while (evals < max_evals) {
    for (int i = 0; i <= n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fs[static_cast<std::size_t>(a)] < fs[static_cast<std::size_t>(b)]; });
    const int best = order[0];
    const int worst = order[static_cast<std::size_t>(n)];
    const int second_worst = order[static_cast<std::size_t>(n) - 1];

    if (std::abs(fs[static_cast<std::size_t>(worst)] - fs[static_cast<std::size_t>(best)]) <=
        ftol * (Scalar(1) + std::abs(fs[static_cast<std::size_t>(best)]))) {
      converged = true;
      break;
    }

    VectorX<Scalar> centroid = VectorX<Scalar>::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (order[static_cast<std::size_t>(i)] != worst) centroid += xs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    centroid /= Scalar(n);

    VectorX<Scalar> xr = centroid + (centroid - xs[static_cast<std::size_t>(worst)]);
    const Scalar fr = eval(xr);
    if (fr < fs[static_cast<std::size_t>(best)]) {
      VectorX<Scalar> xe = centroid + Scalar(2) * (centroid - xs[static_cast<std::size_t>(worst)]);
      const Scalar fe = eval(xe);
      if (fe < fr) {
        xs[static_cast<std::size_t>(worst)] = std::move(xe);
        fs[static_cast<std::size_t>(worst)] = fe;
      } else {
        xs[static_cast<std::size_t>(worst)] = std::move(xr);
        fs[static_cast<std::size_t>(worst)] = fr;
      }
    } else if (fr < fs[static_cast<std::size_t>(second_worst)]) {
      xs[static_cast<std::size_t>(worst)] = std::move(xr);
      fs[static_cast<std::size_t>(worst)] = fr;
    } else {
      const bool outside = fr < fs[static_cast<std::size_t>(worst)];
      VectorX<Scalar> xc = outside
          ? centroid + Scalar(0.5) * (xr - centroid)
          : centroid + Scalar(0.5) * (xs[static_cast<std::size_t>(worst)] - centroid);
      const Scalar fc = eval(xc);
      if (fc < (outside ? fr : fs[static_cast<std::size_t>(worst)])) {
        xs[static_cast<std::size_t>(worst)] = std::move(xc);
        fs[static_cast<std::size_t>(worst)] = fc;
      } else {
        // shrink toward the best vertex
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          xs[static_cast<std::size_t>(i)] = xs[static_cast<std::size_t>(best)] +
              Scalar(0.5) * (xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(best)]);
          fs[static_cast<std::size_t>(i)] = eval(xs[static_cast<std::size_t>(i)]);
          if (evals >= max_evals) break;
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i) {
    if (fs[static_cast<std::size_t>(i)] < fs[static_cast<std::size_t>(best)]) best = i;
  }
  return {xs[static_cast<std::size_t>(best)], fs[static_cast<std::size_t>(best)], evals, converged};
}

}  // namespace detail

// Local NLML minimization over log(l), log(sf2), log(sy2) with a seeded
// multi-start (the surface is multimodal). Start 0 is the caller's init, so
// the returned NLML never exceeds NLML(init). Ties between starts keep the
// lowest start index.
template <typename Scalar>
FitResult<Scalar> fit_hyperparameters(const TrainingSet<Scalar>& train,
                                      const Hyperparameters<Scalar>& init,
                                      const HyperBounds<Scalar>& bounds = {},
                                      const FitOptions<Scalar>& opts = {}) {
  const Scalar kInfeasible = Scalar(1e300);
  auto in = [](Scalar v, const std::pair<Scalar, Scalar>& b) {
    return v >= b.first && v <= b.second;
  };
  if (!in(init.length_scale, bounds.length_scale) ||
      !in(init.signal_variance, bounds.signal_variance) ||
      !in(init.noise_variance, bounds.noise_variance)) {
    throw std::invalid_argument("fit_hyperparameters: init outside bounds");
  }

  Eigen::Matrix<Scalar, 3, 2> logb;
  logb << std::log(bounds.length_scale.first), std::log(bounds.length_scale.second),
      std::log(bounds.signal_variance.first), std::log(bounds.signal_variance.second),
      std::log(bounds.noise_variance.first), std::log(bounds.noise_variance.second);

  auto objective = [&](const VectorX<Scalar>& t) -> Scalar {
    for (int i = 0; i < 3; ++i) {
      if (t[i] < logb(i, 0) || t[i] > logb(i, 1)) return kInfeasible;
    }
    try {
      Hyperparameters<Scalar> h(std::exp(t[0]), std::exp(t[1]), std::exp(t[2]));
      const Scalar v = nlml(train, h);
      return std::isfinite(double(v)) ? v : kInfeasible;
    } catch (const std::exception&) {
      return kInfeasible;
    }
  };

  Rng rng(derive_seed(opts.seed, 0x4f7074ULL));
  std::uniform_real_distribution<Scalar> uni(Scalar(0), Scalar(1));

  VectorX<Scalar> best_x(3);
  best_x << std::log(init.length_scale), std::log(init.signal_variance),
      std::log(init.noise_variance);
  Scalar best_f = kInfeasible;
  bool best_converged = false;
  int best_start = 0;
  int total_evals = 0;

  for (int s = 0; s < std::max(1, opts.starts); ++s) {
    VectorX<Scalar> x0(3);
    if (s == 0) {
      x0 << std::log(init.length_scale), std::log(init.signal_variance),
          std::log(init.noise_variance);
    } else {
      for (int i = 0; i < 3; ++i) {
        x0[i] = logb(i, 0) + uni(rng) * (logb(i, 1) - logb(i, 0));
      }
    }
    auto r = detail::nelder_mead<Scalar>(objective, x0, Scalar(0.3),
                                         opts.max_evals_per_start, opts.ftol);
    total_evals += r.evaluations;
    if (r.fx < best_f) {
      best_f = r.fx;
      best_x = r.x;
      best_converged = r.converged;
      best_start = s;
    }
  }

  FitResult<Scalar> out{
      Hyperparameters<Scalar>(std::exp(best_x[0]), std::exp(best_x[1]),
                              std::exp(best_x[2])),
      best_f, best_converged, total_evals, best_start};
  return out;
}

}  // namespace arraygp
