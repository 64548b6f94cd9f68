#include "arraygp/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "arraygp/errors.hpp"
#include "arraygp/io.hpp"
#include "arraygp/version.hpp"

namespace arraygp::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw std::invalid_argument(msg); }

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      invalid("cannot parse number '" + item + "' in " + what);
    }
  }
  if (out.empty()) invalid(what + " must not be empty");
  return out;
}

Hyperparameters<double> parse_hyper(const std::string& text) {
  const auto v = parse_number_list(text, "--hyper");
  if (v.size() != 3) invalid("--hyper expects 'length_scale,signal_variance,noise_variance'");
  return Hyperparameters<double>(v[0], v[1], v[2]);
}

MatrixX<double> parse_sigma(const std::string& text, int dimension) {
  const auto d = static_cast<Eigen::Index>(dimension);
  if (text.empty()) return MatrixX<double>::Zero(d, d);
  const auto v = parse_number_list(text, "--sigma-x");
  if (v.size() == 1) return MatrixX<double>::Identity(d, d) * v[0];
  if (static_cast<Eigen::Index>(v.size()) == d) {
    MatrixX<double> S = MatrixX<double>::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) S(i, i) = v[static_cast<std::size_t>(i)];
    return S;
  }
  invalid("--sigma-x expects a scalar or one diagonal value per dimension");
}

fs::path out_path(const CommonOptions& common, const std::string& name) {
  return fs::path(common.output_dir) / name;
}

json metadata_json(const CommonOptions& common) {
  json j;
  j["generator_version"] = kVersion;
  j["output_dir"] = common.output_dir;
  return j;
}

std::string points_csv(const MatrixX<double>& points,
                       const std::vector<std::pair<std::string, VectorX<double>>>& columns) {
  static const char* axis_names[] = {"x", "y", "z"};
  std::ostringstream out;
  for (Eigen::Index a = 0; a < points.rows(); ++a) out << (a ? "," : "") << axis_names[a];
  for (const auto& [name, _] : columns) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    for (Eigen::Index a = 0; a < points.rows(); ++a) {
      out << (a ? "," : "") << io::format_double(points(a, i));
    }
    for (const auto& [_, values] : columns) out << ',' << io::format_double(values[i]);
    out << '\n';
  }
  return out.str();
}

void write_sweep_outputs(const CommonOptions& common, const std::string& kind,
                         const experiments::SweepResult& result,
                         const std::vector<double>& values) {
  io::atomic_write(out_path(common, kind + ".csv"), io::sweep_csv(result));
  json j = io::sweep_json(result, values);
  io::atomic_write(out_path(common, kind + ".json"), j.dump(2) + "\n");
}

int simulate_single_array(const CommonOptions& common, const experiments::ScenarioConfig& cfg) {
  const auto result = experiments::run_single_array_case(cfg);
  const auto& data = result.data;

  std::vector<std::pair<std::string, VectorX<double>>> columns;
  columns.emplace_back("latent", data.latent_grid);
  columns.emplace_back("latent_shifted", data.latent_grid_shifted);
  for (std::size_t i = 0; i < result.methods.size(); ++i) {
    const std::string name = to_string(result.methods[i]);
    columns.emplace_back("mean_" + name,
                         VectorX<double>(result.fits[i].posterior.mean.array() +
                                         data.train.output_mean));
    columns.emplace_back("var_" + name, result.fits[i].posterior.variance());
  }
  io::atomic_write(out_path(common, "single_array_maps.csv"),
                   points_csv(data.grid, columns));

  json j = metadata_json(common);
  j["kind"] = "single_array";
  j["config"] = io::config_json(cfg);
  json fits = json::array();
  for (std::size_t i = 0; i < result.methods.size(); ++i) {
    json f;
    f["method"] = to_string(result.methods[i]);
    f["report"] = io::report_json(result.fits[i].report);
    f["jittered"] = result.fits[i].jittered;
    fits.push_back(std::move(f));
  }
  j["fits"] = std::move(fits);
  io::atomic_write(out_path(common, "single_array.json"), j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int cmd_simulate(const SimulateOptions& opts) {
  return guarded([&]() -> int {
    if (opts.config_path.empty()) invalid("simulate requires --config");
    const json raw = io::load_config(opts.config_path);
    if (!raw.contains("kind")) invalid("config must set 'kind'");
    const std::string kind = raw["kind"].get<std::string>();

    experiments::ScenarioConfig defaults;
    if (kind == "input_uncertainty") defaults = experiments::default_input_uncertainty_config();
    else if (kind == "array_length") defaults = experiments::default_array_length_config();
    else if (kind == "single_array") defaults = experiments::default_single_array_config();
    else if (kind == "beta") defaults = experiments::default_beta_config();
    else invalid("unknown scenario kind '" + kind + "'");

    experiments::ScenarioConfig cfg = io::scenario_from_json(raw, defaults);
    if (opts.common.seed_set) cfg.seed = opts.common.seed;
    if (opts.common.threads > 0) cfg.threads = opts.common.threads;
    if (opts.mc_runs_override > 0) cfg.mc_runs = opts.mc_runs_override;
    NoiseModel<double>(cfg.sigma_x, NoiseStructure::ArrayCorrelated);  // PSD check up front

    if (kind == "single_array") return simulate_single_array(opts.common, cfg);

    std::vector<double> values;
    const char* key = kind == "input_uncertainty" ? "sigma_x_values"
                      : kind == "array_length" ? "lengths"
                                               : "beta_values";
    if (raw.contains(key)) {
      values = raw[key].get<std::vector<double>>();
    } else if (kind == "input_uncertainty") {
      values = {0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.25};
    } else if (kind == "array_length") {
      values = {0.0, 0.3, 0.5, 0.65, 0.8, 1.0, 1.5, 2.0};
    } else {
      values = {0.01, 0.05, 0.1, 0.15, 0.2};
    }
    if (values.empty()) invalid(std::string(key) + " must not be empty");

    experiments::SweepResult result;
    if (kind == "input_uncertainty") {
      result = experiments::run_input_uncertainty_sweep(cfg, values);
    } else if (kind == "array_length") {
      result = experiments::run_array_length_sweep(cfg, values);
    } else {
      result = experiments::run_beta_sweep(cfg, values);
    }
    write_sweep_outputs(opts.common, kind, result, values);
    return kExitOk;
  });
}

int cmd_calibrate(const CalibrateOptions& opts) {
  return guarded([&]() -> int {
    const NormMode mode = io::parse_norm_mode(opts.norm_mode);
    const auto raw = io::read_raw_log(opts.raw_path);
    if (raw.t.empty()) invalid("raw log is empty: " + opts.raw_path);
    const auto calibration = io::read_calibration(opts.calibration_path);

    VectorX<double> y(static_cast<Eigen::Index>(raw.t.size()));
    for (std::size_t i = 0; i < raw.t.size(); ++i) {
      const auto it = calibration.find(raw.sensor_id[i]);
      if (it == calibration.end()) {
        invalid("no calibration entry for sensor_id " + std::to_string(raw.sensor_id[i]));
      }
      y[static_cast<Eigen::Index>(i)] = apply_calibration(raw.field[i], it->second, mode);
    }
    const auto [centered, mean] = center_outputs(y);

    std::ostringstream out;
    out << "t,sensor_id,y\n";
    for (std::size_t i = 0; i < raw.t.size(); ++i) {
      out << io::format_double(raw.t[i]) << ',' << raw.sensor_id[i] << ','
          << io::format_double(centered[static_cast<Eigen::Index>(i)]) << '\n';
    }
    io::atomic_write(out_path(opts.common, opts.output_name + ".csv"), out.str());

    json sidecar = metadata_json(opts.common);
    sidecar["subtracted_mean"] = mean;
    sidecar["norm_mode"] = to_string(mode);
    sidecar["rows"] = raw.t.size();
    io::atomic_write(out_path(opts.common, opts.output_name + ".json"),
                     sidecar.dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_fit_map(const FitMapOptions& opts) {
  return guarded([&]() -> int {
    const Method method = io::parse_method(opts.method);
    const auto geom = io::read_geometry(opts.geometry_path);
    const int d = static_cast<int>(geom.dim());
    const auto poses = io::read_poses(opts.poses_path, d);
    const auto meas = io::read_measurements(opts.measurements_path);
    if (meas.t.empty()) invalid("measurement log is empty");
    if (opts.grid.empty()) invalid("fit-map requires --grid");
    const MatrixX<double> grid = io::parse_grid_spec(opts.grid, d);

    // Join measurements and poses on t; both sides must cover the same set.
    std::map<double, std::size_t> pose_at;
    for (std::size_t i = 0; i < poses.t.size(); ++i) pose_at[poses.t[i]] = i;
    std::map<double, std::vector<std::size_t>> rows_at;
    for (std::size_t i = 0; i < meas.t.size(); ++i) rows_at[meas.t[i]].push_back(i);
    std::vector<double> missing;
    for (const auto& [t, _] : rows_at) {
      if (!pose_at.count(t)) missing.push_back(t);
    }
    for (const auto& [t, _] : pose_at) {
      if (!rows_at.count(t)) missing.push_back(t);
    }
    if (!missing.empty()) {
      std::sort(missing.begin(), missing.end());
      std::ostringstream msg;
      msg << "misaligned timesteps between measurements and poses; unmatched t values:";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) {
        msg << ' ' << io::format_double(missing[i]);
      }
      if (missing.size() > 20) msg << " ... (" << missing.size() << " total)";
      invalid(msg.str());
    }

    const Eigen::Index n = static_cast<Eigen::Index>(meas.t.size());
    MatrixX<double> inputs(d, n);
    VectorX<double> outputs(n);
    std::vector<std::vector<Eigen::Index>> groups;
    Eigen::Index at = 0;
    for (const auto& [t, rows] : rows_at) {
      const auto& pose = poses.poses[pose_at[t]];
      const MatrixX<double> positions = sensor_positions(pose, geom);
      std::set<int> seen;
      std::vector<Eigen::Index> group;
      for (std::size_t r : rows) {
        const int sid = meas.sensor_id[r];
        if (sid < 0 || sid >= geom.sensor_count()) {
          invalid("sensor_id " + std::to_string(sid) + " outside geometry with m=" +
                  std::to_string(geom.sensor_count()));
        }
        if (!seen.insert(sid).second) {
          invalid("duplicate sensor_id " + std::to_string(sid) + " at t=" +
                  io::format_double(t));
        }
        inputs.col(at) = positions.col(sid);
        outputs[at] = meas.y[r];
        group.push_back(at);
        ++at;
      }
      groups.push_back(std::move(group));
    }

    auto train = TrainingSet<double>::from_raw(inputs, outputs, groups);

    Hyperparameters<double> hyper(1.0, 1.0, 1e-4);
    json hyper_meta;
    if (opts.hyper == "fit" || opts.hyper.empty()) {
      const double span = (train.inputs.rowwise().maxCoeff() -
                           train.inputs.rowwise().minCoeff()).norm();
      const double var = train.outputs.squaredNorm() / double(std::max<Eigen::Index>(n - 1, 1));
      HyperBounds<double> bounds;
      Hyperparameters<double> init(std::max(span / 10.0, 1e-2),
                                   std::max(var, 1e-6),
                                   std::max(0.1 * var, 1e-8));
      FitOptions<double> fit_opts;
      fit_opts.seed = opts.common.seed;
      const auto fitted = fit_hyperparameters(train, init, bounds, fit_opts);
      hyper = fitted.hyper;
      hyper_meta["source"] = "fit";
      hyper_meta["nlml"] = fitted.nlml_value;
      hyper_meta["optimizer"] = "nelder-mead(log-space)";
      hyper_meta["starts"] = fit_opts.starts;
      hyper_meta["max_evals_per_start"] = fit_opts.max_evals_per_start;
      hyper_meta["evaluations"] = fitted.evaluations;
      hyper_meta["converged"] = fitted.converged;
      hyper_meta["init"] = {{"length_scale", init.length_scale},
                            {"signal_variance", init.signal_variance},
                            {"noise_variance", init.noise_variance}};
    } else {
      hyper = parse_hyper(opts.hyper);
      hyper_meta["source"] = "explicit";
    }
    hyper_meta["length_scale"] = hyper.length_scale;
    hyper_meta["signal_variance"] = hyper.signal_variance;
    hyper_meta["noise_variance"] = hyper.noise_variance;

    const MatrixX<double> sigma = parse_sigma(opts.sigma_x, d);
    const NoiseModel<double> noise(sigma, NoiseStructure::ArrayCorrelated);
    const auto fit = fit_map(train, grid, hyper, method, noise, opts.delta_epsilon,
                             opts.max_iter, PredictOptions{false});

    std::vector<std::pair<std::string, VectorX<double>>> columns;
    columns.emplace_back("mean", VectorX<double>(fit.posterior.mean.array() +
                                                 train.output_mean));
    columns.emplace_back("variance", fit.posterior.variance());
    const std::string map_csv = points_csv(grid, columns);
    if (opts.common.format == "json") {
      json mj;
      mj["grid"] = json::array();
      for (Eigen::Index i = 0; i < grid.cols(); ++i) {
        json p = json::array();
        for (Eigen::Index a = 0; a < grid.rows(); ++a) p.push_back(grid(a, i));
        mj["grid"].push_back(std::move(p));
      }
      mj["mean"] = std::vector<double>(columns[0].second.data(),
                                       columns[0].second.data() + columns[0].second.size());
      mj["variance"] = std::vector<double>(columns[1].second.data(),
                                           columns[1].second.data() + columns[1].second.size());
      io::atomic_write(out_path(opts.common, opts.output_prefix + "_map.json"),
                       mj.dump(2) + "\n");
    } else {
      io::atomic_write(out_path(opts.common, opts.output_prefix + "_map.csv"), map_csv);
    }

    json report = metadata_json(opts.common);
    report["method"] = to_string(method);
    report["measurements"] = opts.measurements_path;
    report["poses"] = opts.poses_path;
    report["geometry"] = opts.geometry_path;
    report["grid"] = opts.grid;
    report["delta_epsilon_requested"] = opts.delta_epsilon;
    report["max_iter"] = opts.max_iter;
    report["norm_mode"] = opts.norm_mode;
    report["seed"] = opts.common.seed;
    report["hyperparameters"] = hyper_meta;
    json sigma_rows = json::array();
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < sigma.cols(); ++k) row.push_back(sigma(i, k));
      sigma_rows.push_back(std::move(row));
    }
    report["sigma_x"] = std::move(sigma_rows);
    report["report"] = io::report_json(fit.report);
    report["jittered"] = fit.jittered;
    report["n"] = n;
    report["timesteps"] = groups.size();
    io::atomic_write(out_path(opts.common, opts.output_prefix + "_report.json"),
                     report.dump(2) + "\n");

    io::MapModel model;
    model.hyper = hyper;
    model.train = std::move(train);
    model.sigma_x = sigma;
    model.method = method;
    model.noise_term = fit.noise_term;
    model.report = fit.report;
    model.delta_epsilon = fit.report.delta_epsilon;
    model.max_iter = opts.max_iter;
    model.norm_mode = io::parse_norm_mode(opts.norm_mode);
    io::atomic_write(out_path(opts.common, opts.output_prefix + "_model.json"),
                     io::model_json(model).dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_predict(const PredictCmdOptions& opts) {
  return guarded([&]() -> int {
    const io::MapModel model = io::read_model(opts.model_path);
    const auto csv = io::read_csv(opts.points_path);
    const int d = static_cast<int>(model.train.dim());
    const std::vector<std::string> expected = d == 1 ? std::vector<std::string>{"x"}
                                              : d == 2
                                                  ? std::vector<std::string>{"x", "y"}
                                                  : std::vector<std::string>{"x", "y", "z"};
    if (csv.header != expected) {
      invalid("points CSV must have coordinate columns matching the model dimension");
    }
    MatrixX<double> points(d, static_cast<Eigen::Index>(csv.rows.size()));
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
      for (int a = 0; a < d; ++a) {
        points(a, static_cast<Eigen::Index>(i)) = std::stod(csv.rows[i][static_cast<std::size_t>(a)]);
      }
    }

    MatrixX<double> C = detail::system_matrix(model.train, model.hyper);
    model.noise_term.add_to(C);
    const auto factor = detail::factor_spd(std::move(C), model.hyper.signal_variance,
                                           "predict");
    const auto post = detail::posterior_from_factor(model.train, points, model.hyper,
                                                    factor, PredictOptions{false});

    std::vector<std::pair<std::string, VectorX<double>>> columns;
    columns.emplace_back("mean", VectorX<double>(post.mean.array() + model.train.output_mean));
    columns.emplace_back("variance", post.variance());
    if (opts.common.format == "json") {
      json pj;
      pj["mean"] = std::vector<double>(columns[0].second.data(),
                                       columns[0].second.data() + columns[0].second.size());
      pj["variance"] = std::vector<double>(columns[1].second.data(),
                                           columns[1].second.data() + columns[1].second.size());
      io::atomic_write(out_path(opts.common, opts.output_name + ".json"), pj.dump(2) + "\n");
    } else {
      io::atomic_write(out_path(opts.common, opts.output_name + ".csv"),
                       points_csv(points, columns));
      json sidecar = metadata_json(opts.common);
      sidecar["model"] = opts.model_path;
      sidecar["points"] = opts.points_path;
      sidecar["method"] = to_string(model.method);
      io::atomic_write(out_path(opts.common, opts.output_name + "_meta.json"),
                       sidecar.dump(2) + "\n");
    }
    return kExitOk;
  });
}

int cmd_sample_prior(const SamplePriorOptions& opts) {
  return guarded([&]() -> int {
    const Hyperparameters<double> hyper = parse_hyper(opts.hyper);
    MatrixX<double> points;
    if (!opts.points_path.empty()) {
      const auto csv = io::read_csv(opts.points_path);
      const auto d = static_cast<int>(csv.header.size());
      if (d < 1 || d > 3) invalid("points CSV must have 1 to 3 coordinate columns");
      points.resize(d, static_cast<Eigen::Index>(csv.rows.size()));
      for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        for (int a = 0; a < d; ++a) {
          points(a, static_cast<Eigen::Index>(i)) = std::stod(csv.rows[i][static_cast<std::size_t>(a)]);
        }
      }
    } else if (!opts.grid.empty()) {
      points = io::parse_grid_spec(opts.grid, opts.dimension);
    } else {
      invalid("sample-prior requires --points or --grid");
    }
    if (points.cols() == 0) invalid("no points to sample at");

    const std::uint64_t seed = opts.common.seed_set ? opts.common.seed : 1;
    const auto f = experiments::sample_gp_prior(points, hyper, seed);
    std::vector<std::pair<std::string, VectorX<double>>> columns;
    columns.emplace_back("f", f);
    io::atomic_write(out_path(opts.common, opts.output_name + ".csv"),
                     points_csv(points, columns));
    json sidecar = metadata_json(opts.common);
    sidecar["seed"] = seed;
    sidecar["hyper"] = opts.hyper;
    if (!opts.grid.empty()) sidecar["grid"] = opts.grid;
    if (!opts.points_path.empty()) sidecar["points"] = opts.points_path;
    io::atomic_write(out_path(opts.common, opts.output_name + "_meta.json"),
                     sidecar.dump(2) + "\n");
    return kExitOk;
  });
}

}  // namespace arraygp::cli
