#include "arraygp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace arraygp::experiments {

namespace {

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

Vector linspace(double lo, double hi, int count) {
  Vector v(count);
  if (count == 1) {
    v[0] = (lo + hi) / 2.0;
    return v;
  }
  for (int i = 0; i < count; ++i) {
    v[i] = lo + (hi - lo) * double(i) / double(count - 1);
  }
  return v;
}

// Cartesian product grid over the domain; an axis with lo == hi contributes a
// single fixed coordinate.
Matrix build_grid(const std::vector<std::pair<double, double>>& domain, int resolution) {
  const auto d = static_cast<Eigen::Index>(domain.size());
  std::vector<Vector> axes;
  Eigen::Index total = 1;
  for (const auto& [lo, hi] : domain) {
    axes.push_back(lo == hi ? Vector::Constant(1, lo) : linspace(lo, hi, resolution));
    total *= axes.back().size();
  }
  Matrix grid(d, total);
  for (Eigen::Index p = 0; p < total; ++p) {
    Eigen::Index rem = p;
    for (Eigen::Index a = 0; a < d; ++a) {
      grid(a, p) = axes[static_cast<std::size_t>(a)][rem % axes[static_cast<std::size_t>(a)].size()];
      rem /= axes[static_cast<std::size_t>(a)].size();
    }
  }
  return grid;
}

std::vector<std::vector<Eigen::Index>> contiguous_groups(Eigen::Index timesteps,
                                                         Eigen::Index m) {
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(timesteps));
  for (Eigen::Index k = 0; k < timesteps; ++k) {
    groups[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      groups[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = k * m + i;
    }
  }
  return groups;
}

Matrix stack_timesteps(const std::vector<Matrix>& per_timestep) {
  const Eigen::Index d = per_timestep.front().rows();
  Eigen::Index n = 0;
  for (const auto& p : per_timestep) n += p.cols();
  Matrix stacked(d, n);
  Eigen::Index at = 0;
  for (const auto& p : per_timestep) {
    stacked.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return stacked;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Offsets of m sensors equidistant along the first axis, total span `length`.
Matrix line_array_offsets(Eigen::Index d, Eigen::Index m, double length) {
  Matrix offsets = Matrix::Zero(d, m);
  if (m > 1) offsets.row(0) = linspace(-length / 2.0, length / 2.0, int(m)).transpose();
  return offsets;
}

struct SweepSettings {
  std::string kind;
  bool vs_reference = false;  // RMSE against the true-input GP instead of the latent
  std::function<ScenarioData(double value, int run)> make;
};

RunRecord record_from_fit(int run, Method method, const FitMapResult<double>& fit,
                          const Vector& predicted, const Vector& truth) {
  RunRecord rec;
  rec.run = run;
  rec.method = method;
  rec.rmse = rmse(predicted, truth);
  rec.mean_variance = fit.posterior.variance().mean();
  rec.iterations = fit.report.iterations;
  rec.converged = fit.report.converged;
  rec.final_epsilon = fit.report.epsilon_history.empty()
                          ? 0.0
                          : fit.report.epsilon_history.back();
  rec.jittered = fit.jittered;
  rec.min_variance_raw = fit.posterior.variance_raw.size() > 0
                             ? fit.posterior.variance_raw.minCoeff()
                             : 0.0;
  return rec;
}

MethodAggregate aggregate(Method method, const std::vector<RunRecord>& runs) {
  MethodAggregate agg;
  agg.method = method;
  std::vector<double> rs, vs;
  for (const auto& r : runs) {
    if (r.method != method) continue;
    rs.push_back(r.rmse);
    vs.push_back(r.mean_variance);
  }
  auto mean_of = [](const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / double(xs.size());
  };
  auto std_of = [&](const std::vector<double>& xs, double mu) {
    if (xs.size() < 2) return 0.0;
    double s = 0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return std::sqrt(s / double(xs.size() - 1));
  };
  agg.mean_rmse = mean_of(rs);
  agg.std_rmse = std_of(rs, agg.mean_rmse);
  agg.mean_variance = mean_of(vs);
  agg.std_variance = std_of(vs, agg.mean_variance);
  return agg;
}

SweepResult run_sweep(const ScenarioConfig& cfg, const std::vector<double>& values,
                      const SweepSettings& settings) {
  if (cfg.mc_runs < 1) throw std::invalid_argument("mc_runs must be at least 1");
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");

  SweepResult result;
  result.kind = settings.kind;
  result.config = cfg;
  result.cells.resize(values.size());

  for (std::size_t c = 0; c < values.size(); ++c) {
    const double value = values[c];
    CellResult& cell = result.cells[c];
    cell.value = value;
    cell.runs.resize(static_cast<std::size_t>(cfg.mc_runs) * cfg.methods.size());
    if (settings.vs_reference) {
      cell.baseline_runs.resize(static_cast<std::size_t>(cfg.mc_runs));
    }

    parallel_for(cfg.mc_runs, cfg.threads, [&](int run) {
      const ScenarioData data = settings.make(value, run);
      const NoiseModel<double> noise(data.sigma_x, NoiseStructure::ArrayCorrelated);
      const PredictOptions diag_only{false};

      Vector truth = data.latent_grid;
      if (settings.vs_reference) {
        auto ref_train = TrainingSet<double>::from_raw(data.true_inputs, data.outputs_raw,
                                                       data.train.groups);
        FitMapResult<double> ref = fit_map(ref_train, data.grid, cfg.hyper, Method::GP,
                                           noise, cfg.delta_epsilon, cfg.max_iter,
                                           diag_only);
        truth = ref.posterior.mean.array() + ref_train.output_mean;
        cell.baseline_runs[static_cast<std::size_t>(run)] =
            record_from_fit(run, Method::GP, ref, truth, truth);
      }

      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const Method method = cfg.methods[mi];
        FitMapResult<double> fit =
            fit_map(data.train, data.grid, cfg.hyper, method, noise,
                    cfg.delta_epsilon, cfg.max_iter, diag_only);
        const Vector predicted = fit.posterior.mean.array() + data.train.output_mean;
        cell.runs[static_cast<std::size_t>(run) * cfg.methods.size() + mi] =
            record_from_fit(run, method, fit, predicted, truth);
      }
    });

    for (Method method : cfg.methods) {
      cell.aggregates.push_back(aggregate(method, cell.runs));
    }
  }
  return result;
}

}  // namespace

double rmse(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("rmse: length mismatch");
  }
  if (predicted.size() == 0) {
    throw std::invalid_argument("rmse: empty input");
  }
  return std::sqrt((predicted - truth).squaredNorm() / double(predicted.size()));
}

Vector sample_gp_prior(const Matrix& points, const Hyperparameters<double>& h, Rng& rng) {
  Matrix K = kernel_matrix(points, points, h);
  const auto factor = detail::factor_spd(std::move(K), h.signal_variance, "sample_gp_prior");
  const Vector z = standard_normal<double>(points.cols(), rng);
  return factor.llt.matrixL() * z;
}

Vector sample_gp_prior(const Matrix& points, const Hyperparameters<double>& h,
                       std::uint64_t seed) {
  Rng rng(seed);
  return sample_gp_prior(points, h, rng);
}

ScenarioConfig default_input_uncertainty_config() {
  return ScenarioConfig{};  // 1-D, [0,5], 60 centers, 5 sensors, l=0.5, 100 runs
}

ScenarioConfig default_array_length_config() {
  ScenarioConfig cfg;
  cfg.sigma_x = Matrix::Constant(1, 1, 0.05);
  cfg.methods = {Method::NIGP, Method::ArrayNIGP};
  return cfg;
}

ScenarioConfig default_single_array_config() {
  ScenarioConfig cfg;
  cfg.sensors_per_array = 10;
  cfg.array_length = 2.0;
  cfg.hyper = Hyperparameters<double>(0.5, 1.0, 0.0);  // measurement noise omitted
  cfg.input_error = 0.5;
  cfg.mc_runs = 1;
  return cfg;
}

ScenarioConfig default_beta_config() {
  ScenarioConfig cfg;
  cfg.dimension = 3;
  cfg.domain = {{-2.5, 2.5}, {-2.5, 2.5}, {0.0, 0.0}};
  cfg.array_centers = 40;  // timesteps; 40 x 30 sensors = 1200 points
  cfg.sensors_per_array = 30;
  cfg.hyper = Hyperparameters<double>(0.55, 4.9e-3, 5e-4);
  cfg.sigma_x = Matrix::Zero(3, 3);
  cfg.mc_runs = 20;
  cfg.methods = {Method::NIGP, Method::ArrayNIGP};
  cfg.grid_resolution = 25;
  return cfg;
}

ScenarioData make_array_scenario_1d(const ScenarioConfig& cfg, double sigma_x_value,
                                    double array_length, std::uint64_t run_seed) {
  if (cfg.dimension != 1) {
    throw std::invalid_argument("make_array_scenario_1d: dimension must be 1");
  }
  const Eigen::Index m = cfg.sensors_per_array;
  const Eigen::Index N = cfg.array_centers;
  const ArrayGeometry<double> geom(line_array_offsets(1, m, array_length));
  const Vector centers = linspace(cfg.domain[0].first, cfg.domain[0].second, int(N));

  std::vector<Matrix> true_positions;
  true_positions.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index k = 0; k < N; ++k) {
    Pose<double> pose(Vector::Constant(1, centers[k]), Matrix::Identity(1, 1));
    true_positions.push_back(sensor_positions(pose, geom));
  }

  ScenarioData data;
  data.true_inputs = stack_timesteps(true_positions);
  data.grid = build_grid(cfg.domain, cfg.grid_resolution);
  data.sigma_x = Matrix::Constant(1, 1, sigma_x_value);

  Rng rng(run_seed);
  const Vector latent =
      sample_gp_prior(hcat(data.true_inputs, data.grid), cfg.hyper, rng);
  const Eigen::Index n = data.true_inputs.cols();
  data.latent_inputs = latent.head(n);
  data.latent_grid = latent.tail(data.grid.cols());

  const NoiseModel<double> gen_noise(data.sigma_x, NoiseStructure::ArrayCorrelated);
  const Matrix noisy = stack_timesteps(perturb_positions(true_positions, gen_noise, rng));

  const double sigma_y = std::sqrt(cfg.hyper.noise_variance);
  data.outputs_raw = data.latent_inputs + sigma_y * standard_normal<double>(n, rng);
  data.train = TrainingSet<double>::from_raw(noisy, data.outputs_raw,
                                             contiguous_groups(N, m));
  return data;
}

ScenarioData make_single_array_scenario(const ScenarioConfig& cfg,
                                        std::uint64_t run_seed) {
  if (cfg.dimension != 1) {
    throw std::invalid_argument("make_single_array_scenario: dimension must be 1");
  }
  const Eigen::Index m = cfg.sensors_per_array;
  const ArrayGeometry<double> geom(line_array_offsets(1, m, cfg.array_length));
  // True centre at 1.0 so a length-2 array spans [0, 2] and, shifted by the
  // 0.5 input error, the data lie on [0.5, 2.5].
  Pose<double> pose(Vector::Constant(1, 1.0), Matrix::Identity(1, 1));

  ScenarioData data;
  data.true_inputs = sensor_positions(pose, geom);
  data.grid = build_grid(cfg.domain, cfg.grid_resolution);
  const double e_x = cfg.input_error;
  // The fixed offset is one realization of an error with std |e_x|.
  data.sigma_x = Matrix::Constant(1, 1, e_x * e_x);

  Rng rng(run_seed);
  const Eigen::Index n = data.true_inputs.cols();
  const Eigen::Index g = data.grid.cols();
  if (e_x == 0.0) {
    const Vector latent = sample_gp_prior(hcat(data.true_inputs, data.grid), cfg.hyper, rng);
    data.latent_inputs = latent.head(n);
    data.latent_grid = latent.tail(g);
    data.latent_grid_shifted = data.latent_grid;
  } else {
    const Matrix shifted_grid = data.grid.array() - e_x;
    const Vector latent = sample_gp_prior(
        hcat(hcat(data.true_inputs, data.grid), shifted_grid), cfg.hyper, rng);
    data.latent_inputs = latent.head(n);
    data.latent_grid = latent.segment(n, g);
    data.latent_grid_shifted = latent.tail(g);
  }

  const Matrix noisy = data.true_inputs.array() + e_x;  // not sampled
  data.outputs_raw = data.latent_inputs;                // sigma_y = 0
  data.train = TrainingSet<double>::from_raw(noisy, data.outputs_raw,
                                             contiguous_groups(1, m));
  return data;
}

ScenarioData make_trajectory_scenario(const ScenarioConfig& cfg, double beta,
                                      std::uint64_t run) {
  if (cfg.dimension != 3) {
    throw std::invalid_argument("make_trajectory_scenario: dimension must be 3");
  }
  // 30 magnetometers on a 6 x 5 grid spanning 0.32 m x 0.22 m.
  Matrix offsets(3, 30);
  {
    const Vector xs = linspace(-0.16, 0.16, 6);
    const Vector ys = linspace(-0.11, 0.11, 5);
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 5; ++j) {
        offsets.col(c++) << xs[i], ys[j], 0.0;
      }
    }
  }
  const ArrayGeometry<double> geom(offsets);
  const Eigen::Index m = geom.sensor_count();
  const Eigen::Index N = cfg.array_centers;

  // Square path of side 3 m centred at the origin, heading along the path.
  std::vector<Matrix> true_positions;
  true_positions.reserve(static_cast<std::size_t>(N));
  const double side = 3.0;
  const double half = side / 2.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    const double s = 4.0 * side * double(k) / double(N);
    const int edge = std::min(3, int(s / side));
    const double t = s - side * edge;
    Vector center(3);
    double heading = 0;
    switch (edge) {
      case 0: center << -half + t, -half, 0.0; heading = 0; break;
      case 1: center << half, -half + t, 0.0; heading = std::numbers::pi / 2; break;
      case 2: center << half - t, half, 0.0; heading = std::numbers::pi; break;
      default: center << -half, half - t, 0.0; heading = 3 * std::numbers::pi / 2; break;
    }
    Matrix R(3, 3);
    R << std::cos(heading), -std::sin(heading), 0.0,
         std::sin(heading), std::cos(heading), 0.0,
         0.0, 0.0, 1.0;
    true_positions.push_back(sensor_positions(Pose<double>(center, R), geom));
  }

  ScenarioData data;
  data.true_inputs = stack_timesteps(true_positions);
  data.grid = build_grid(cfg.domain, cfg.grid_resolution);
  Matrix sigma = Matrix::Zero(3, 3);
  sigma(0, 0) = beta;
  sigma(1, 1) = beta;  // no input noise on the vertical axis
  data.sigma_x = sigma;

  Rng rng(run_seed);
  const Vector latent =
      sample_gp_prior(hcat(data.true_inputs, data.grid), cfg.hyper, rng);
  const Eigen::Index n = data.true_inputs.cols();
  data.latent_inputs = latent.head(n);
  data.latent_grid = latent.tail(data.grid.cols());

  const NoiseModel<double> gen_noise(data.sigma_x, NoiseStructure::ArrayCorrelated);
  const Matrix noisy = stack_timesteps(perturb_positions(true_positions, gen_noise, rng));

  const double sigma_y = std::sqrt(cfg.hyper.noise_variance);
  data.outputs_raw = data.latent_inputs + sigma_y * standard_normal<double>(n, rng);
  data.train = TrainingSet<double>::from_raw(noisy, data.outputs_raw,
                                             contiguous_groups(N, m));
  return data;
}

SweepResult run_input_uncertainty_sweep(const ScenarioConfig& cfg,
                                        const std::vector<double>& sigma_x_values) {
  SweepSettings settings;
  settings.kind = "input_uncertainty";
  settings.make = [&cfg](double value, int run) {
    return make_array_scenario_1d(
        cfg, value, cfg.array_length,
        derive_seed(cfg.seed, seed_key(value), static_cast<std::uint64_t>(run)));
  };
  return run_sweep(cfg, sigma_x_values, settings);
}

SweepResult run_array_length_sweep(const ScenarioConfig& cfg,
                                   const std::vector<double>& lengths) {
  SweepSettings settings;
  settings.kind = "array_length";
  settings.make = [&cfg](double value, int run) {
    return make_array_scenario_1d(
        cfg, cfg.sigma_x(0, 0), value,
        derive_seed(cfg.seed, seed_key(value), static_cast<std::uint64_t>(run)));
  };
  return run_sweep(cfg, lengths, settings);
}

SweepResult run_beta_sweep(const ScenarioConfig& cfg,
                           const std::vector<double>& beta_values) {
  SweepSettings settings;
  settings.kind = "beta";
  settings.vs_reference = true;
  // Cells are paired on the data: the trajectory, latent and measurement
  // noise depend on the run index only, and each beta resamples just the
  // input errors on that shared data set.
  settings.make = [&cfg](double value, int run) {
    return make_trajectory_scenario(cfg, value, static_cast<std::uint64_t>(run));
  };
  return run_sweep(cfg, beta_values, settings);
}

SingleArrayResult run_single_array_case(const ScenarioConfig& cfg) {
  SingleArrayResult result;
  result.config = cfg;
  result.methods = cfg.methods;
  const std::uint64_t seed = derive_seed(cfg.seed, seed_key(cfg.input_error), 0);
  result.data = make_single_array_scenario(cfg, seed);
  const NoiseModel<double> noise(result.data.sigma_x, NoiseStructure::ArrayCorrelated);
  for (Method method : cfg.methods) {
    result.fits.push_back(fit_map(result.data.train, result.data.grid, cfg.hyper,
                                  method, noise, cfg.delta_epsilon, cfg.max_iter,
                                  PredictOptions{false}));
  }
  return result;
}

}  // namespace arraygp::experiments
