#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "arraygp/calibration.hpp"
#include "arraygp/experiments.hpp"
#include "arraygp/geometry.hpp"
#include "arraygp/input_noise.hpp"

namespace arraygp::io {

using json = nlohmann::json;

// Shortest round-trip decimal text for a double (std::to_chars).
std::string format_double(double v);

// Write-temp-then-rename so readers never observe partial files.
void atomic_write(const std::filesystem::path& path, const std::string& content);

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const std::filesystem::path& path);
std::string to_text(const Csv& csv);

// Flat `key = value` config text (strings, numbers, booleans, possibly nested
// arrays), '#' comments. Returns a JSON object; .json files parse natively.
json parse_config_text(const std::string& text);
json load_config(const std::filesystem::path& path);

Method parse_method(const std::string& name);
NormMode parse_norm_mode(const std::string& name);

// "lo:hi:count" per axis, axes joined by ';'. lo == hi or count == 1 pins the
// axis to a single coordinate.
MatrixX<double> parse_grid_spec(const std::string& spec, int dimension);

json config_json(const experiments::ScenarioConfig& cfg);
experiments::ScenarioConfig scenario_from_json(const json& j,
                                               const experiments::ScenarioConfig& defaults);

std::string sweep_csv(const experiments::SweepResult& result);
json sweep_json(const experiments::SweepResult& result,
                const std::vector<double>& values);

// Geometry file: {"dimension": d, "offsets": [[...], ...]}.
ArrayGeometry<double> read_geometry(const std::filesystem::path& path);

// Calibration file: list of {"sensor_id": i, "D": [9 row-major], "b": [3]}.
std::map<int, SensorCalibration<double>> read_calibration(const std::filesystem::path& path);

// Raw triaxial log: CSV t,sensor_id,mx,my,mz.
struct RawLog {
  std::vector<double> t;
  std::vector<int> sensor_id;
  std::vector<Eigen::Vector3d> field;
};
RawLog read_raw_log(const std::filesystem::path& path);

// Scalar measurement log: CSV t,sensor_id,y.
struct MeasurementLog {
  std::vector<double> t;
  std::vector<int> sensor_id;
  std::vector<double> y;
};
MeasurementLog read_measurements(const std::filesystem::path& path);

// Pose log: d=1 -> t,px; d=2 -> t,px,py,theta; d=3 -> t,px,py,pz,qw,qx,qy,qz
// (quaternion normalized on load).
struct PoseLog {
  std::vector<double> t;
  std::vector<Pose<double>> poses;
};
PoseLog read_poses(const std::filesystem::path& path, int dimension);

// Persisted fit: everything needed to reproduce predictions with the stored
// heteroskedastic term.
struct MapModel {
  Hyperparameters<double> hyper{1.0, 1.0, 0.0};
  TrainingSet<double> train;
  MatrixX<double> sigma_x;
  Method method = Method::GP;
  InputNoiseTerm<double> noise_term;
  IterationReport<double> report;
  double delta_epsilon = 0;
  int max_iter = 0;
  NormMode norm_mode = NormMode::SquaredNorm;
};

json model_json(const MapModel& model);
MapModel read_model(const std::filesystem::path& path);

json report_json(const IterationReport<double>& report);

}  // namespace arraygp::io
