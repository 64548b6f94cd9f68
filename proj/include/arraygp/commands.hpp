#pragma once

#include <cstdint>
#include <string>

namespace arraygp::cli {

// Process-style exit codes shared by all commands: 0 success, 2 invalid
// configuration or input files, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string output_dir = ".";
  bool seed_set = false;
  std::uint64_t seed = 1;
  int threads = 0;            // 0 keeps the config/default value
  std::string format = "csv"; // map/prediction output format: csv or json
};

struct SimulateOptions {
  CommonOptions common;
  std::string config_path;
  int mc_runs_override = 0;  // 0 keeps the config value
};

struct CalibrateOptions {
  CommonOptions common;
  std::string raw_path;
  std::string calibration_path;
  std::string output_name = "calibrated";
  std::string norm_mode = "squared";
};

struct FitMapOptions {
  CommonOptions common;
  std::string measurements_path;
  std::string poses_path;
  std::string geometry_path;
  std::string method = "GP";
  std::string hyper;      // "fit" or "l,sf2,sy2"
  std::string sigma_x;    // scalar "v" or diagonal "a,b,c"; empty means zero
  std::string grid;       // "lo:hi:count" per axis joined by ';'
  double delta_epsilon = 0;
  int max_iter = 30;
  std::string output_prefix = "map";
  std::string norm_mode = "squared";
};

struct PredictCmdOptions {
  CommonOptions common;
  std::string model_path;
  std::string points_path;
  std::string output_name = "predictions";
};

struct SamplePriorOptions {
  CommonOptions common;
  std::string grid;         // grid spec; alternative to points_path
  std::string points_path;  // CSV with coordinate columns
  std::string hyper = "0.5,1,0.001";
  int dimension = 1;
  std::string output_name = "prior_sample";
};

int cmd_simulate(const SimulateOptions& opts);
int cmd_calibrate(const CalibrateOptions& opts);
int cmd_fit_map(const FitMapOptions& opts);
int cmd_predict(const PredictCmdOptions& opts);
int cmd_sample_prior(const SamplePriorOptions& opts);

}  // namespace arraygp::cli
