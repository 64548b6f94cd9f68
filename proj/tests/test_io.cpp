#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "arraygp/commands.hpp"
#include "arraygp/io.hpp"

using namespace arraygp;
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("arraygp_test_" + std::to_string(std::rand()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1e-300, 3.141592653589793, 1e17, -2.2250738585072014e-308,
                   0.030000000000000002, 5.0 / 3.0}) {
    const std::string s = io::format_double(v);
    double back = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), back);
    REQUIRE(res.ec == std::errc());
    CHECK(back == v);
  }
}

TEST_CASE("atomic_write leaves complete files") {
  TempDir dir;
  io::atomic_write(dir.file("a.txt"), "hello\n");
  CHECK(slurp(dir.file("a.txt")) == "hello\n");
  CHECK_FALSE(fs::exists(dir.file("a.txt.tmp")));
  io::atomic_write(dir.file("a.txt"), "rewritten\n");
  CHECK(slurp(dir.file("a.txt")) == "rewritten\n");
}

TEST_CASE("key=value config parsing") {
  const auto j = io::parse_config_text(
      "# scenario\n"
      "kind = \"input_uncertainty\"  # trailing comment\n"
      "mc_runs = 5\n"
      "sigma_x_values = [0, 0.01, 0.25]\n"
      "domain = [[0, 5]]\n"
      "flag = true\n");
  CHECK(j["kind"] == "input_uncertainty");
  CHECK(j["mc_runs"] == 5.0);
  CHECK(j["sigma_x_values"].size() == 3);
  CHECK(j["sigma_x_values"][2] == 0.25);
  CHECK(j["domain"][0][1] == 5.0);
  CHECK(j["flag"] == true);

  CHECK_THROWS_AS(io::parse_config_text("no equals sign"), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_config_text("x = [1, 2"), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_config_text("x = abc"), std::invalid_argument);
}

TEST_CASE("grid spec parsing") {
  const MatrixXd g1 = io::parse_grid_spec("0:5:6", 1);
  REQUIRE(g1.cols() == 6);
  CHECK(g1(0, 0) == 0.0);
  CHECK(g1(0, 5) == 5.0);

  const MatrixXd g2 = io::parse_grid_spec("0:1:3;10:10:1", 2);
  REQUIRE(g2.cols() == 3);
  CHECK(g2(1, 0) == 10.0);

  CHECK_THROWS_AS(io::parse_grid_spec("0:5:6", 2), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_grid_spec("0:5", 1), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_grid_spec("0:5:0", 1), std::invalid_argument);
}

TEST_CASE("geometry and calibration files") {
  TempDir dir;
  spit(dir.file("geom.json"),
       R"({"dimension": 2, "offsets": [[-0.5, 0.0], [0.5, 0.0]]})");
  const auto geom = io::read_geometry(dir.file("geom.json"));
  CHECK(geom.dim() == 2);
  CHECK(geom.sensor_count() == 2);

  spit(dir.file("cal.json"),
       R"([{"sensor_id": 0, "D": [1,0,0, 0,1,0, 0,0,1], "b": [0,0,0]},
           {"sensor_id": 3, "D": [2,0,0, 0,2,0, 0,0,2], "b": [0.1,0,0]}])");
  const auto cal = io::read_calibration(dir.file("cal.json"));
  CHECK(cal.size() == 2);
  CHECK(cal.at(3).distortion(0, 0) == 2.0);
  CHECK(cal.at(3).bias[0] == 0.1);

  spit(dir.file("bad.json"), R"({"dimension": 5, "offsets": [[0,0,0,0,0]]})");
  CHECK_THROWS_AS(io::read_geometry(dir.file("bad.json")), std::invalid_argument);
}

TEST_CASE("model JSON round trip preserves predictions") {
  Rng rng(77);
  std::uniform_real_distribution<double> uni(0.0, 4.0);
  MatrixXd X(1, 12);
  for (int i = 0; i < 12; ++i) X(0, i) = uni(rng);
  VectorXd y = standard_normal<double>(12, rng);
  auto train = TrainingSet<double>::from_raw(X, y, {{0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9, 10, 11}});
  const Hyperparameters<double> h(0.7, 1.0, 0.01);
  const NoiseModel<double> noise(MatrixXd::Constant(1, 1, 0.02),
                                 NoiseStructure::ArrayCorrelated);
  MatrixXd predict(1, 5);
  predict << 0.3, 1.1, 2.2, 3.3, 4.4;
  const auto fit = fit_map(train, predict, h, Method::ArrayNIGP, noise);

  io::MapModel model;
  model.hyper = h;
  model.train = train;
  model.sigma_x = noise.sigma_x;
  model.method = Method::ArrayNIGP;
  model.noise_term = fit.noise_term;
  model.report = fit.report;
  model.delta_epsilon = fit.report.delta_epsilon;
  model.max_iter = 30;

  TempDir dir;
  io::atomic_write(dir.file("model.json"), io::model_json(model).dump(2));
  const auto loaded = io::read_model(dir.file("model.json"));
  CHECK(loaded.train.size() == train.size());
  CHECK(loaded.hyper.length_scale == h.length_scale);
  CHECK(loaded.noise_term.blocks.size() == fit.noise_term.blocks.size());

  MatrixXd C = detail::system_matrix(loaded.train, loaded.hyper);
  loaded.noise_term.add_to(C);
  const auto factor = detail::factor_spd(std::move(C), loaded.hyper.signal_variance, "test");
  const auto post = detail::posterior_from_factor(loaded.train, predict, loaded.hyper,
                                                  factor, PredictOptions{});
  CHECK((post.mean - fit.posterior.mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("simulate command writes deterministic sweep files") {
  TempDir dir;
  spit(dir.file("cfg.toml"),
       "kind = \"input_uncertainty\"\n"
       "sigma_x_values = [0, 0.01, 0.02, 0.05]\n"
       "mc_runs = 5\n"
       "array_centers = 10\n"
       "grid_resolution = 30\n"
       "seed = 21\n");

  cli::SimulateOptions opts;
  opts.common.output_dir = dir.file("out1");
  opts.config_path = dir.file("cfg.toml");
  REQUIRE(cli::cmd_simulate(opts) == cli::kExitOk);

  const auto csv = io::read_csv(dir.file("out1") + "/input_uncertainty.csv");
  CHECK(csv.header == std::vector<std::string>{"value", "method", "mean_rmse", "std_rmse",
                                               "mean_var", "std_var"});
  CHECK(csv.rows.size() == 4 * 3);  // 4 sweep cells x 3 methods

  opts.common.output_dir = dir.file("out2");
  REQUIRE(cli::cmd_simulate(opts) == cli::kExitOk);
  CHECK(slurp(dir.file("out1") + "/input_uncertainty.csv") ==
        slurp(dir.file("out2") + "/input_uncertainty.csv"));
  CHECK(slurp(dir.file("out1") + "/input_uncertainty.json") ==
        slurp(dir.file("out2") + "/input_uncertainty.json"));

  SUBCASE("non-PSD sigma_x fails with exit 2 naming the matrix") {
    spit(dir.file("bad.toml"),
         "kind = \"input_uncertainty\"\nsigma_x = -0.5\nmc_runs = 2\n");
    cli::SimulateOptions bad;
    bad.common.output_dir = dir.file("out3");
    bad.config_path = dir.file("bad.toml");
    CHECK(cli::cmd_simulate(bad) == cli::kExitInvalid);
  }

  SUBCASE("unknown kind fails with exit 2") {
    spit(dir.file("bad2.toml"), "kind = \"nope\"\n");
    cli::SimulateOptions bad;
    bad.config_path = dir.file("bad2.toml");
    CHECK(cli::cmd_simulate(bad) == cli::kExitInvalid);
  }
}

TEST_CASE("calibrate command pipeline") {
  TempDir dir;
  spit(dir.file("cal.json"),
       R"([{"sensor_id": 0, "D": [1,0,0, 0,1,0, 0,0,1], "b": [0,0,0]},
           {"sensor_id": 1, "D": [1,0,0, 0,1,0, 0,0,1], "b": [0,0,0]}])");
  spit(dir.file("raw.csv"),
       "t,sensor_id,mx,my,mz\n"
       "0,0,3,4,0\n"
       "0,1,1,0,0\n"
       "1,0,0,0,2\n");

  cli::CalibrateOptions opts;
  opts.common.output_dir = dir.file("out");
  opts.raw_path = dir.file("raw.csv");
  opts.calibration_path = dir.file("cal.json");
  REQUIRE(cli::cmd_calibrate(opts) == cli::kExitOk);

  const auto csv = io::read_csv(dir.file("out") + "/calibrated.csv");
  REQUIRE(csv.rows.size() == 3);
  const auto sidecar = io::json::parse(slurp(dir.file("out") + "/calibrated.json"));
  const double mean = sidecar["subtracted_mean"].get<double>();
  CHECK(mean == doctest::Approx(10.0));  // (25 + 1 + 4) / 3
  CHECK(sidecar["norm_mode"] == "squared");
  // round trip: y + mean restores the squared magnitudes
  CHECK(std::stod(csv.rows[0][2]) + mean == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(std::stod(csv.rows[1][2]) + mean == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("missing calibration entry names the sensor") {
    spit(dir.file("raw2.csv"), "t,sensor_id,mx,my,mz\n0,7,1,0,0\n");
    cli::CalibrateOptions bad = opts;
    bad.raw_path = dir.file("raw2.csv");
    CHECK(cli::cmd_calibrate(bad) == cli::kExitInvalid);
  }

  SUBCASE("empty log is invalid") {
    spit(dir.file("raw3.csv"), "t,sensor_id,mx,my,mz\n");
    cli::CalibrateOptions bad = opts;
    bad.raw_path = dir.file("raw3.csv");
    CHECK(cli::cmd_calibrate(bad) == cli::kExitInvalid);
  }
}

TEST_CASE("fit-map command equals the library path on a toy problem") {
  TempDir dir;
  spit(dir.file("geom.json"), R"({"dimension": 1, "offsets": [[0.0]]})");
  spit(dir.file("poses.csv"), "t,px\n0,0.0\n1,1.0\n2,2.0\n");
  spit(dir.file("meas.csv"), "t,sensor_id,y\n0,0,0.5\n1,0,-0.25\n2,0,0.75\n");

  cli::FitMapOptions opts;
  opts.common.output_dir = dir.file("out");
  opts.measurements_path = dir.file("meas.csv");
  opts.poses_path = dir.file("poses.csv");
  opts.geometry_path = dir.file("geom.json");
  opts.method = "GP";
  opts.hyper = "0.8,1.0,0.001";
  opts.grid = "0:2:5";
  REQUIRE(cli::cmd_fit_map(opts) == cli::kExitOk);

  // library reference
  MatrixXd X(1, 3);
  X << 0.0, 1.0, 2.0;
  VectorXd y(3);
  y << 0.5, -0.25, 0.75;
  auto train = TrainingSet<double>::from_raw(X, y, {{0}, {1}, {2}});
  const Hyperparameters<double> h(0.8, 1.0, 0.001);
  const auto post = gp_posterior(train, io::parse_grid_spec("0:2:5", 1), h);

  const auto map = io::read_csv(dir.file("out") + "/map_map.csv");
  REQUIRE(map.rows.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::stod(map.rows[static_cast<std::size_t>(i)][1]) ==
          doctest::Approx(post.mean[i] + train.output_mean).epsilon(1e-14));
    CHECK(std::stod(map.rows[static_cast<std::size_t>(i)][2]) ==
          doctest::Approx(post.variance()[i]).epsilon(1e-12));
  }

  SUBCASE("ArrayNIGP with zero sigma matches GP") {
    cli::FitMapOptions array_opts = opts;
    array_opts.common.output_dir = dir.file("out_array");
    array_opts.method = "ArrayNIGP";
    array_opts.sigma_x = "0";
    REQUIRE(cli::cmd_fit_map(array_opts) == cli::kExitOk);
    const auto a = io::read_csv(dir.file("out_array") + "/map_map.csv");
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(a.rows[i][1] == map.rows[i][1]);
      CHECK(a.rows[i][2] == map.rows[i][2]);
    }
  }

  SUBCASE("misaligned timesteps list the missing t values") {
    spit(dir.file("meas_bad.csv"), "t,sensor_id,y\n0,0,0.5\n5,0,1.0\n");
    cli::FitMapOptions bad = opts;
    bad.measurements_path = dir.file("meas_bad.csv");
    CHECK(cli::cmd_fit_map(bad) == cli::kExitInvalid);
  }

  SUBCASE("fitted hyperparameters are echoed in metadata") {
    cli::FitMapOptions fitted = opts;
    fitted.common.output_dir = dir.file("out_fit");
    fitted.hyper = "fit";
    REQUIRE(cli::cmd_fit_map(fitted) == cli::kExitOk);
    const auto report = io::json::parse(slurp(dir.file("out_fit") + "/map_report.json"));
    CHECK(report["hyperparameters"]["source"] == "fit");
    CHECK(report["hyperparameters"]["length_scale"].get<double>() > 0.0);
    CHECK(report["hyperparameters"].contains("nlml"));
  }
}

TEST_CASE("predict command reuses the stored model") {
  TempDir dir;
  spit(dir.file("geom.json"), R"({"dimension": 1, "offsets": [[0.0]]})");
  spit(dir.file("poses.csv"), "t,px\n0,0.0\n1,1.0\n2,2.0\n");
  spit(dir.file("meas.csv"), "t,sensor_id,y\n0,0,0.5\n1,0,-0.25\n2,0,0.75\n");

  cli::FitMapOptions fit;
  fit.common.output_dir = dir.file("out");
  fit.measurements_path = dir.file("meas.csv");
  fit.poses_path = dir.file("poses.csv");
  fit.geometry_path = dir.file("geom.json");
  fit.method = "GP";
  fit.hyper = "0.8,1.0,1e-9";  // effectively noiseless
  fit.grid = "0:2:3";
  REQUIRE(cli::cmd_fit_map(fit) == cli::kExitOk);

  spit(dir.file("points.csv"), "x\n1\n50\n");
  cli::PredictCmdOptions pred;
  pred.common.output_dir = dir.file("out");
  pred.model_path = dir.file("out") + "/map_model.json";
  pred.points_path = dir.file("points.csv");
  REQUIRE(cli::cmd_predict(pred) == cli::kExitOk);

  const auto out = io::read_csv(dir.file("out") + "/predictions.csv");
  REQUIRE(out.rows.size() == 2);
  // at a training input of a noiseless fit the stored output comes back
  CHECK(std::stod(out.rows[0][1]) == doctest::Approx(-0.25).epsilon(1e-5));
  // far away: prior reversion to the stored output mean and signal variance
  const double mean_far = std::stod(out.rows[1][1]);
  const double var_far = std::stod(out.rows[1][2]);
  CHECK(mean_far == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(var_far == doctest::Approx(1.0).epsilon(1e-9));

  SUBCASE("prediction order does not matter") {
    spit(dir.file("points_rev.csv"), "x\n50\n1\n");
    cli::PredictCmdOptions rev = pred;
    rev.points_path = dir.file("points_rev.csv");
    rev.output_name = "predictions_rev";
    REQUIRE(cli::cmd_predict(rev) == cli::kExitOk);
    const auto out2 = io::read_csv(dir.file("out") + "/predictions_rev.csv");
    CHECK(out2.rows[1][1] == out.rows[0][1]);
    CHECK(out2.rows[0][1] == out.rows[1][1]);
  }

  SUBCASE("unsupported model versions are rejected") {
    auto j = io::json::parse(slurp(pred.model_path));
    j["format_version"] = 99;
    spit(dir.file("old_model.json"), j.dump());
    cli::PredictCmdOptions bad = pred;
    bad.model_path = dir.file("old_model.json");
    CHECK(cli::cmd_predict(bad) == cli::kExitInvalid);
  }
}

TEST_CASE("the installed binary runs end to end") {
  TempDir dir;
  spit(dir.file("cfg.toml"),
       "kind = \"input_uncertainty\"\n"
       "sigma_x_values = [0, 0.01]\n"
       "mc_runs = 2\n"
       "array_centers = 8\n"
       "grid_resolution = 20\n"
       "seed = 4\n");
  const std::string cli = ARRAYGP_CLI_PATH;
  const std::string cmd = cli + " --output-dir " + dir.file("outA") +
                          " simulate --config " + dir.file("cfg.toml") + " > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string cmd2 = cli + " --output-dir " + dir.file("outB") +
                           " simulate --config " + dir.file("cfg.toml") + " > /dev/null 2>&1";
  REQUIRE(std::system(cmd2.c_str()) == 0);
  CHECK(slurp(dir.file("outA") + "/input_uncertainty.csv") ==
        slurp(dir.file("outB") + "/input_uncertainty.csv"));

  const std::string prior = cli + " --seed 11 --output-dir " + dir.file("outA") +
                            " sample-prior --grid 0:5:20 --hyper 0.5,1,0.001 > /dev/null 2>&1";
  REQUIRE(std::system(prior.c_str()) == 0);
  const auto csv = io::read_csv(dir.file("outA") + "/prior_sample.csv");
  CHECK(csv.rows.size() == 20);

  const std::string bad = cli + " simulate --config /nonexistent.toml > /dev/null 2>&1";
  const int rc = std::system(bad.c_str());
  CHECK(WEXITSTATUS(rc) == 2);
}
