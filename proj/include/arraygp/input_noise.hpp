#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arraygp/errors.hpp"
#include "arraygp/geometry.hpp"
#include "arraygp/gp.hpp"
#include "arraygp/kernel.hpp"

namespace arraygp {

// Posterior-mean gradients at the training inputs, one column per point.
template <typename Scalar>
struct GradientField {
  MatrixX<Scalar> grads;  // d x n, column i is the gradient at x_i

  Eigen::Index dim() const { return grads.rows(); }
  Eigen::Index size() const { return grads.cols(); }

  // The (d*n) x n block-diagonal stacking; used by tests and small cases.
  MatrixX<Scalar> block_diagonal() const {
    const Eigen::Index d = grads.rows();
    const Eigen::Index n = grads.cols();
    MatrixX<Scalar> D = MatrixX<Scalar>::Zero(d * n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      D.block(i * d, i, d, 1) = grads.col(i);
    }
    return D;
  }
};

// The additional heteroskedastic output-noise term Sigma(X), stored as one
// dense block per timestep group (cross-timestep entries are structurally
// zero and never stored).
template <typename Scalar>
struct InputNoiseTerm {
  std::vector<MatrixX<Scalar>> blocks;  // blocks[g] is |group g| x |group g|
  std::vector<std::vector<Eigen::Index>> groups;
  Eigen::Index n = 0;

  static InputNoiseTerm zero(std::vector<std::vector<Eigen::Index>> gs, Eigen::Index total) {
    InputNoiseTerm t;
    t.groups = std::move(gs);
    t.n = total;
    t.blocks.reserve(t.groups.size());
    for (const auto& g : t.groups) {
      t.blocks.push_back(MatrixX<Scalar>::Zero(
          static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size())));
    }
    return t;
  }

  MatrixX<Scalar> dense() const {
    MatrixX<Scalar> S = MatrixX<Scalar>::Zero(n, n);
    add_to(S);
    return S;
  }

  void add_to(Eigen::Ref<MatrixX<Scalar>> C) const {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& idx = groups[g];
      const auto& B = blocks[g];
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          C(idx[a], idx[b]) += B(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
      }
    }
  }
};

// One fixed-point run: epsilon_history[j-1] holds
// eps_j = || grad_j - grad_{j-1} || (Euclidean norm of the stacked gradient
// difference); converged iff the last eps fell below delta_epsilon.
template <typename Scalar>
struct IterationReport {
  int iterations = 0;
  std::vector<Scalar> epsilon_history;
  bool converged = true;
  Scalar delta_epsilon = Scalar(0);
};

// Default stopping threshold, scale-aware so the criterion does not depend on
// unit choices: 0.04 * sqrt(n) * sf / l, i.e. a few percent of the typical
// stacked-gradient norm. The fixed point contracts by roughly one decade per
// two iterations in the small-noise regime, so tightening this mostly buys
// iterations, not accuracy in the posterior.
template <typename Scalar>
Scalar default_delta_epsilon(Eigen::Index n, const Hyperparameters<Scalar>& h) {
  return Scalar(0.04) * std::sqrt(Scalar(n)) * std::sqrt(h.signal_variance) /
         h.length_scale;
}

// Sigma(X) from a gradient field: within each timestep group, entry (i, j) is
// grad_i^T Sigma_x grad_j for ArrayCorrelated and only the diagonal i == j
// for Independent. Both structures share the per-entry expression so that a
// field with a single nonzero gradient yields bit-identical terms.
template <typename Scalar>
InputNoiseTerm<Scalar> input_noise_term(
    const GradientField<Scalar>& grads, const NoiseModel<Scalar>& noise,
    const std::vector<std::vector<Eigen::Index>>& groups) {
  if (noise.dim() != grads.dim()) {
    throw std::invalid_argument("input_noise_term: sigma_x dimension differs from gradients");
  }
  const Eigen::Index n = grads.size();
  InputNoiseTerm<Scalar> term;
  term.groups = groups;
  term.n = n;
  term.blocks.reserve(groups.size());
  Eigen::Index covered = 0;
  for (const auto& idx : groups) {
    const auto m = static_cast<Eigen::Index>(idx.size());
    covered += m;
    MatrixX<Scalar> B = MatrixX<Scalar>::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      if (idx[static_cast<std::size_t>(a)] < 0 || idx[static_cast<std::size_t>(a)] >= n) {
        throw std::invalid_argument("input_noise_term: group index out of range");
      }
      const VectorX<Scalar> sg = noise.sigma_x * grads.grads.col(idx[static_cast<std::size_t>(a)]);
      if (noise.structure == NoiseStructure::Independent) {
        B(a, a) = grads.grads.col(idx[static_cast<std::size_t>(a)]).dot(sg);
      } else {
        for (Eigen::Index b = a; b < m; ++b) {
          const Scalar q = grads.grads.col(idx[static_cast<std::size_t>(b)]).dot(sg);
          B(b, a) = q;
          B(a, b) = q;
        }
      }
    }
    term.blocks.push_back(std::move(B));
  }
  if (covered != n) {
    throw std::invalid_argument("input_noise_term: groups do not cover all gradients");
  }
  return term;
}

namespace detail {

// grad = reshape(G * alpha) with alpha = (K + sy2 I + Sigma(X))^-1 y and G the
// kernel input gradient at the training points.
template <typename Scalar>
GradientField<Scalar> gradient_from_factor(const MatrixX<Scalar>& G,
                                           const SpdFactor<Scalar>& factor,
                                           const VectorX<Scalar>& y,
                                           Eigen::Index d, Eigen::Index n) {
  const VectorX<Scalar> alpha = factor.llt.solve(y);
  VectorX<Scalar> stacked = G * alpha;
  GradientField<Scalar> field;
  field.grads = Eigen::Map<MatrixX<Scalar>>(stacked.data(), d, n);
  return field;
}

}  // namespace detail

// Posterior-mean gradient at the training inputs given a fixed Sigma(X).
template <typename Scalar>
GradientField<Scalar> posterior_mean_gradient(const TrainingSet<Scalar>& train,
                                              const Hyperparameters<Scalar>& h,
                                              const InputNoiseTerm<Scalar>& sigma_X) {
  if (sigma_X.n != train.size()) {
    throw std::invalid_argument("posterior_mean_gradient: Sigma(X) size differs from n");
  }
  MatrixX<Scalar> C = detail::system_matrix(train, h);
  sigma_X.add_to(C);
  const auto factor =
      detail::factor_spd(std::move(C), h.signal_variance, "posterior_mean_gradient");
  const MatrixX<Scalar> G = kernel_input_gradient(train.inputs, train.inputs, h);
  return detail::gradient_from_factor(G, factor, train.outputs, train.dim(), train.size());
}

template <typename Scalar>
struct IterateResult {
  InputNoiseTerm<Scalar> noise_term;
  GradientField<Scalar> gradients;
  IterationReport<Scalar> report;
  bool jittered = false;
};

// The fixed-point loop between Sigma(X) and the posterior-mean gradient.
// Starts from grad = 0 (the plain-GP gradient pass, not counted), then counts
// iterations that re-evaluate Sigma(X) and the gradient until
// ||grad_j - grad_{j-1}|| < delta_epsilon or max_iter is reached.
// Non-convergence is reported, not an error.
template <typename Scalar>
IterateResult<Scalar> iterate_input_noise(const TrainingSet<Scalar>& train,
                                          const Hyperparameters<Scalar>& h,
                                          const NoiseModel<Scalar>& noise,
                                          Scalar delta_epsilon = Scalar(0),
                                          int max_iter = 30) {
  if (max_iter < 1) {
    throw std::invalid_argument("iterate_input_noise: max_iter must be at least 1");
  }
  const Eigen::Index n = train.size();
  const Eigen::Index d = train.dim();
  if (noise.dim() != d) {
    throw std::invalid_argument("iterate_input_noise: sigma_x dimension differs from data");
  }
  const Scalar delta = delta_epsilon > Scalar(0) ? delta_epsilon
                                                 : default_delta_epsilon(n, h);
  if (!(delta > Scalar(0))) {
    throw std::invalid_argument("iterate_input_noise: delta_epsilon must be positive");
  }

  const MatrixX<Scalar> K = detail::system_matrix(train, h);
  const MatrixX<Scalar> G = kernel_input_gradient(train.inputs, train.inputs, h);

  IterateResult<Scalar> result;
  result.report.delta_epsilon = delta;
  result.noise_term = InputNoiseTerm<Scalar>::zero(train.groups, n);
  GradientField<Scalar> grads;
  grads.grads = MatrixX<Scalar>::Zero(d, n);

  auto step = [&](const InputNoiseTerm<Scalar>& sigma, int iteration) {
    MatrixX<Scalar> C = K;
    sigma.add_to(C);
    const auto factor = detail::factor_spd(std::move(C), h.signal_variance,
                                           "iterate_input_noise", iteration);
    result.jittered = result.jittered || factor.jittered;
    return detail::gradient_from_factor(G, factor, train.outputs, d, n);
  };

  grads = step(result.noise_term, 0);

  for (int j = 1; j <= max_iter; ++j) {
    InputNoiseTerm<Scalar> sigma = input_noise_term(grads, noise, train.groups);
    GradientField<Scalar> next = step(sigma, j);
    const Scalar eps = (next.grads - grads.grads).norm();
    result.report.epsilon_history.push_back(eps);
    grads = std::move(next);
    result.noise_term = std::move(sigma);
    if (eps < delta) break;
  }
  result.report.iterations = static_cast<int>(result.report.epsilon_history.size());
  result.report.converged = !result.report.epsilon_history.empty() &&
                            result.report.epsilon_history.back() < delta;
  result.gradients = std::move(grads);
  return result;
}

enum class Method { GP, NIGP, ArrayNIGP };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::GP: return "GP";
    case Method::NIGP: return "NIGP";
    case Method::ArrayNIGP: return "ArrayNIGP";
  }
  return "?";
}

template <typename Scalar>
struct FitMapResult {
  Posterior<Scalar> posterior;
  IterationReport<Scalar> report;
  InputNoiseTerm<Scalar> noise_term;
  GradientField<Scalar> gradients;
  bool jittered = false;
};

// Fits one of the three methods and predicts at deterministic locations.
// GP ignores the noise model; NIGP forces the Independent structure and
// ArrayNIGP the ArrayCorrelated one, both reusing sigma_x from `noise`.
// No input-noise term is added at the prediction points.
template <typename Scalar>
FitMapResult<Scalar> fit_map(const TrainingSet<Scalar>& train,
                             const MatrixX<Scalar>& predict,
                             const Hyperparameters<Scalar>& h, Method method,
                             const NoiseModel<Scalar>& noise,
                             Scalar delta_epsilon = Scalar(0), int max_iter = 30,
                             const PredictOptions& opts = {}) {
  FitMapResult<Scalar> out;
  if (method == Method::GP) {
    out.noise_term = InputNoiseTerm<Scalar>::zero(train.groups, train.size());
    out.gradients.grads = MatrixX<Scalar>::Zero(train.dim(), train.size());
    out.report.delta_epsilon = delta_epsilon > Scalar(0)
                                   ? delta_epsilon
                                   : default_delta_epsilon(train.size(), h);
  } else {
    const NoiseStructure structure = method == Method::NIGP
                                         ? NoiseStructure::Independent
                                         : NoiseStructure::ArrayCorrelated;
    NoiseModel<Scalar> model(noise.sigma_x, structure);
    auto it = iterate_input_noise(train, h, model, delta_epsilon, max_iter);
    out.report = std::move(it.report);
    out.noise_term = std::move(it.noise_term);
    out.gradients = std::move(it.gradients);
    out.jittered = it.jittered;
  }

  MatrixX<Scalar> C = detail::system_matrix(train, h);
  out.noise_term.add_to(C);
  const auto factor = detail::factor_spd(std::move(C), h.signal_variance, "fit_map");
  out.jittered = out.jittered || factor.jittered;
  out.posterior = detail::posterior_from_factor(train, predict, h, factor, opts);
  return out;
}

}  // namespace arraygp
