#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arraygp/geometry.hpp"
#include "arraygp/gp.hpp"
#include "arraygp/input_noise.hpp"
#include "arraygp/random.hpp"

namespace arraygp::experiments {

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

double rmse(const Vector& predicted, const Vector& truth);

// One draw from N(0, K(points, points)); deterministic given the seed.
Vector sample_gp_prior(const Matrix& points, const Hyperparameters<double>& h, Rng& rng);
Vector sample_gp_prior(const Matrix& points, const Hyperparameters<double>& h,
                       std::uint64_t seed);

struct ScenarioConfig {
  int dimension = 1;
  std::vector<std::pair<double, double>> domain = {{0.0, 5.0}};
  int array_centers = 60;  // timestep count; centers placed on a grid (or path)
  int sensors_per_array = 5;
  double array_length = 0.5;  // sensors equidistant along the array axis
  Hyperparameters<double> hyper{0.5, 1.0, 0.001};
  Matrix sigma_x = Matrix::Constant(1, 1, 0.05);
  int mc_runs = 100;
  std::uint64_t seed = 1;
  std::vector<Method> methods = {Method::GP, Method::NIGP, Method::ArrayNIGP};
  int grid_resolution = 200;  // per non-degenerate axis
  double delta_epsilon = 0.0;  // 0 selects the scale-aware default
  int max_iter = 30;
  double input_error = 0.5;  // fixed offset e_x of the single-array case
  int threads = 1;
};

// Stock defaults for the four scenario kinds.
ScenarioConfig default_input_uncertainty_config();
ScenarioConfig default_array_length_config();
ScenarioConfig default_single_array_config();
ScenarioConfig default_beta_config();

// One synthetic realization: latent sampled jointly over the true inputs and
// every point it must be known at, measurements at the true locations, the
// GP trained on the perturbed locations.
struct ScenarioData {
  TrainingSet<double> train;  // noisy inputs, centered outputs
  Matrix true_inputs;         // d x n
  Vector outputs_raw;         // uncentered measurements
  Matrix grid;                // d x g prediction grid
  Vector latent_grid;
  Vector latent_inputs;        // latent at the true inputs
  Vector latent_grid_shifted;  // latent at (grid - e_x); single-array case only
  Matrix sigma_x;              // input covariance handed to the methods
};

ScenarioData make_array_scenario_1d(const ScenarioConfig& cfg, double sigma_x_value,
                                    double array_length, std::uint64_t run_seed);
ScenarioData make_single_array_scenario(const ScenarioConfig& cfg,
                                        std::uint64_t run_seed);
ScenarioData make_trajectory_scenario(const ScenarioConfig& cfg, double beta,
                                      std::uint64_t run_seed);

struct RunRecord {
  int run = 0;
  Method method = Method::GP;
  double rmse = 0;
  double mean_variance = 0;  // grid average of the clamped predictive variance
  int iterations = 0;
  bool converged = true;
  double final_epsilon = 0;
  bool jittered = false;
  double min_variance_raw = 0;  // pre-clamp minimum over the grid
};

struct MethodAggregate {
  Method method = Method::GP;
  double mean_rmse = 0;
  double std_rmse = 0;
  double mean_variance = 0;
  double std_variance = 0;
};

struct CellResult {
  double value = 0;
  std::vector<MethodAggregate> aggregates;
  std::vector<RunRecord> runs;
  std::vector<RunRecord> baseline_runs;  // beta sweep: true-input reference fits
};

struct SweepResult {
  std::string kind;
  ScenarioConfig config;
  std::vector<CellResult> cells;
};

// Fig. 2 analog: RMSE against the latent over a sweep of input covariances,
// one paired data set per run shared by every method.
SweepResult run_input_uncertainty_sweep(const ScenarioConfig& cfg,
                                        const std::vector<double>& sigma_x_values);

// Figs. 4/5 analog: sweep of the array length at fixed input covariance.
SweepResult run_array_length_sweep(const ScenarioConfig& cfg,
                                   const std::vector<double>& lengths);

// Fig. 8 analog: RMSE against a reference GP fitted on the true input
// locations, over a sweep of the horizontal input-noise scale beta.
SweepResult run_beta_sweep(const ScenarioConfig& cfg,
                           const std::vector<double>& beta_values);

// Fig. 6: every measurement from one array with a fixed input offset.
struct SingleArrayResult {
  ScenarioConfig config;
  ScenarioData data;
  std::vector<Method> methods;
  std::vector<FitMapResult<double>> fits;  // aligned with methods
};

SingleArrayResult run_single_array_case(const ScenarioConfig& cfg);

}  // namespace arraygp::experiments
