#include <CLI11.hpp>

#include "arraygp/commands.hpp"
#include "arraygp/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Magnetic-field mapping with Gaussian-process regression from "
               "noisy-input sensor arrays"};
  app.set_version_flag("--version", arraygp::kVersion);
  app.require_subcommand(1);

  arraygp::cli::CommonOptions common;
  bool seed_given = false;
  std::uint64_t seed_value = 1;
  app.add_option("--seed", seed_value, "Master seed for all random draws");
  app.add_option("--threads", common.threads, "Worker threads for Monte Carlo runs");
  app.add_option("--output-dir", common.output_dir, "Directory for result files");
  app.add_option("--format", common.format, "Output format for maps/predictions")
      ->check(CLI::IsMember({"csv", "json"}));

  arraygp::cli::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run a configured Monte Carlo scenario");
  simulate->add_option("--config", sim.config_path, "Scenario config file (key=value or JSON)")
      ->required();
  simulate->add_option("--mc-runs", sim.mc_runs_override, "Override the configured run count");

  arraygp::cli::CalibrateOptions cal;
  auto* calibrate = app.add_subcommand("calibrate", "Turn raw triaxial readings into scalar outputs");
  calibrate->add_option("--raw", cal.raw_path, "Raw log CSV (t,sensor_id,mx,my,mz)")->required();
  calibrate->add_option("--calibration", cal.calibration_path, "Calibration JSON")->required();
  calibrate->add_option("--output-name", cal.output_name, "Basename of the output files");
  calibrate->add_option("--norm-mode", cal.norm_mode, "squared (default) or norm")
      ->check(CLI::IsMember({"squared", "norm"}));

  arraygp::cli::FitMapOptions fit;
  auto* fit_map = app.add_subcommand("fit-map", "Fit a field map from measurement files");
  fit_map->add_option("--measurements", fit.measurements_path, "CSV t,sensor_id,y")->required();
  fit_map->add_option("--poses", fit.poses_path, "Pose log CSV")->required();
  fit_map->add_option("--geometry", fit.geometry_path, "Array geometry JSON")->required();
  fit_map->add_option("--method", fit.method, "GP, NIGP or ArrayNIGP")
      ->check(CLI::IsMember({"GP", "NIGP", "ArrayNIGP"}));
  fit_map->add_option("--hyper", fit.hyper, "'l,sf2,sy2' or 'fit' for NLML fitting");
  fit_map->add_option("--sigma-x", fit.sigma_x, "Input covariance: scalar or diagonal list");
  fit_map->add_option("--grid", fit.grid, "Prediction grid 'lo:hi:count' per axis, ';'-joined")
      ->required();
  fit_map->add_option("--delta-epsilon", fit.delta_epsilon, "Stopping threshold (0 = auto)");
  fit_map->add_option("--max-iter", fit.max_iter, "Fixed-point iteration cap");
  fit_map->add_option("--output-prefix", fit.output_prefix, "Prefix of the output files");
  fit_map->add_option("--norm-mode", fit.norm_mode, "Recorded calibration norm mode")
      ->check(CLI::IsMember({"squared", "norm"}));

  arraygp::cli::PredictCmdOptions pred;
  auto* predict = app.add_subcommand("predict", "Predict from a persisted map model");
  predict->add_option("--model", pred.model_path, "Model JSON from fit-map")->required();
  predict->add_option("--points", pred.points_path, "CSV of prediction points")->required();
  predict->add_option("--output-name", pred.output_name, "Basename of the output file");

  arraygp::cli::SamplePriorOptions prior;
  auto* sample_prior = app.add_subcommand("sample-prior", "Draw one GP prior sample");
  sample_prior->add_option("--grid", prior.grid, "Grid spec 'lo:hi:count' per axis");
  sample_prior->add_option("--points", prior.points_path, "CSV of points");
  sample_prior->add_option("--dimension", prior.dimension, "Dimension of the grid spec");
  sample_prior->add_option("--hyper", prior.hyper, "'l,sf2,sy2'");
  sample_prior->add_option("--output-name", prior.output_name, "Basename of the output file");

  CLI11_PARSE(app, argc, argv);
  seed_given = app.count("--seed") > 0;
  common.seed_set = seed_given;
  common.seed = seed_value;

  if (*simulate) {
    sim.common = common;
    return arraygp::cli::cmd_simulate(sim);
  }
  if (*calibrate) {
    cal.common = common;
    return arraygp::cli::cmd_calibrate(cal);
  }
  if (*fit_map) {
    fit.common = common;
    return arraygp::cli::cmd_fit_map(fit);
  }
  if (*predict) {
    pred.common = common;
    return arraygp::cli::cmd_predict(pred);
  }
  if (*sample_prior) {
    prior.common = common;
    return arraygp::cli::cmd_sample_prior(prior);
  }
  return arraygp::cli::kExitInvalid;
}
