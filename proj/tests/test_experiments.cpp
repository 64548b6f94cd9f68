#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "arraygp/experiments.hpp"

using namespace arraygp;
using namespace arraygp::experiments;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool records_equal(const RunRecord& a, const RunRecord& b) {
  return a.run == b.run && a.method == b.method && a.rmse == b.rmse &&
         a.mean_variance == b.mean_variance && a.iterations == b.iterations &&
         a.converged == b.converged && a.final_epsilon == b.final_epsilon;
}

}  // namespace

TEST_CASE("rmse basics") {
  VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 3.0, 4.0;
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));

  VectorXd p(4), q(4);
  p << 1.0, -2.0, 0.5, 3.0;
  q << 0.0, 1.0, 2.0, -1.0;
  VectorXd p2(4), q2(4);
  p2 << 3.0, 0.5, 1.0, -2.0;
  q2 << -1.0, 2.0, 0.0, 1.0;  // same pairs, shared permutation
  CHECK(rmse(p, q) == doctest::Approx(rmse(p2, q2)).epsilon(1e-15));

  CHECK_THROWS_AS(rmse(a, VectorXd(3)), std::invalid_argument);
  CHECK_THROWS_AS(rmse(VectorXd(0), VectorXd(0)), std::invalid_argument);
}

TEST_CASE("prior samples have the kernel's moments") {
  const Hyperparameters<double> h(0.5, 1.3, 0.0);

  SUBCASE("single point variance") {
    MatrixXd x(1, 1);
    x << 1.7;
    double sum = 0, sum2 = 0;
    const int kDraws = 10000;
    for (int s = 0; s < kDraws; ++s) {
      const VectorXd f = sample_gp_prior(x, h, derive_seed(100, 0, static_cast<std::uint64_t>(s)));
      sum += f[0];
      sum2 += f[0] * f[0];
    }
    const double mean = sum / kDraws;
    const double var = sum2 / kDraws - mean * mean;
    CHECK(std::abs(var - h.signal_variance) <= 0.05 * h.signal_variance);
    CHECK(std::abs(mean) < 0.05);
  }

  SUBCASE("correlation at one length-scale") {
    MatrixXd x(1, 2);
    x << 0.0, 0.5;  // distance l
    double s00 = 0, s11 = 0, s01 = 0;
    const int kDraws = 10000;
    for (int s = 0; s < kDraws; ++s) {
      const VectorXd f = sample_gp_prior(x, h, derive_seed(200, 0, static_cast<std::uint64_t>(s)));
      s00 += f[0] * f[0];
      s11 += f[1] * f[1];
      s01 += f[0] * f[1];
    }
    const double corr = s01 / std::sqrt(s00 * s11);
    CHECK(std::abs(corr - std::exp(-0.5)) < 0.05);
  }

  SUBCASE("deterministic per seed") {
    MatrixXd x(1, 5);
    x << 0.0, 1.0, 2.0, 3.0, 4.0;
    const VectorXd f1 = sample_gp_prior(x, h, 42);
    const VectorXd f2 = sample_gp_prior(x, h, 42);
    CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("duplicate points are handled through the jitter path") {
    MatrixXd x(1, 3);
    x << 1.0, 1.0, 2.0;
    CHECK_NOTHROW(sample_gp_prior(x, h, 11));
  }
}

TEST_CASE("input-uncertainty sweep pairs methods within a run") {
  auto cfg = default_input_uncertainty_config();
  cfg.mc_runs = 3;
  cfg.array_centers = 12;
  cfg.grid_resolution = 40;
  cfg.seed = 5;
  const auto result = run_input_uncertainty_sweep(cfg, {0.0, 0.01});

  REQUIRE(result.cells.size() == 2);
  for (const auto& cell : result.cells) {
    CHECK(cell.runs.size() == static_cast<std::size_t>(cfg.mc_runs) * cfg.methods.size());
    CHECK(cell.aggregates.size() == cfg.methods.size());
  }

  // methods coincide run-by-run when sigma_x = 0
  const auto& zero_cell = result.cells[0];
  for (int run = 0; run < cfg.mc_runs; ++run) {
    const auto& gp = zero_cell.runs[static_cast<std::size_t>(run) * 3 + 0];
    const auto& nigp = zero_cell.runs[static_cast<std::size_t>(run) * 3 + 1];
    const auto& array = zero_cell.runs[static_cast<std::size_t>(run) * 3 + 2];
    CHECK(gp.rmse == nigp.rmse);
    CHECK(gp.rmse == array.rmse);
    CHECK(gp.mean_variance == array.mean_variance);
  }
}

TEST_CASE("sweeps are deterministic and stable under added cells") {
  auto cfg = default_input_uncertainty_config();
  cfg.mc_runs = 2;
  cfg.array_centers = 10;
  cfg.grid_resolution = 30;
  cfg.seed = 9;

  const auto a = run_input_uncertainty_sweep(cfg, {0.01, 0.05});
  const auto b = run_input_uncertainty_sweep(cfg, {0.01, 0.05});
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    REQUIRE(a.cells[c].runs.size() == b.cells[c].runs.size());
    for (std::size_t r = 0; r < a.cells[c].runs.size(); ++r) {
      CHECK(records_equal(a.cells[c].runs[r], b.cells[c].runs[r]));
    }
  }

  // appending a value must not change existing cells' draws
  const auto extended = run_input_uncertainty_sweep(cfg, {0.01, 0.05, 0.1});
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    for (std::size_t r = 0; r < a.cells[c].runs.size(); ++r) {
      CHECK(records_equal(a.cells[c].runs[r], extended.cells[c].runs[r]));
    }
  }

  // threads must not affect the numbers
  auto threaded = cfg;
  threaded.threads = 4;
  const auto t = run_input_uncertainty_sweep(threaded, {0.01, 0.05});
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    for (std::size_t r = 0; r < a.cells[c].runs.size(); ++r) {
      CHECK(records_equal(a.cells[c].runs[r], t.cells[c].runs[r]));
    }
  }
}

TEST_CASE("array-length sweep runs and reports sane aggregates") {
  auto cfg = default_array_length_config();
  cfg.mc_runs = 2;
  cfg.array_centers = 10;
  cfg.grid_resolution = 30;
  const auto result = run_array_length_sweep(cfg, {0.0, 1.0});
  REQUIRE(result.cells.size() == 2);
  for (const auto& cell : result.cells) {
    for (const auto& agg : cell.aggregates) {
      CHECK(agg.mean_rmse >= 0.0);
      CHECK(agg.std_rmse >= 0.0);
      CHECK(agg.std_variance >= 0.0);
      CHECK(std::isfinite(agg.mean_variance));
    }
  }
}

TEST_CASE("single-array case with zero offset interpolates the latent") {
  auto cfg = default_single_array_config();
  cfg.input_error = 0.0;
  cfg.grid_resolution = 50;
  const auto result = run_single_array_case(cfg);
  REQUIRE(result.fits.size() == result.methods.size());
  const NoiseModel<double> noise(result.data.sigma_x, NoiseStructure::ArrayCorrelated);
  for (Method method : result.methods) {
    // predict back at the sensor locations: noiseless interpolation
    const auto at_inputs = fit_map(result.data.train, result.data.train.inputs,
                                   cfg.hyper, method, noise);
    const VectorXd restored = at_inputs.posterior.mean.array() + result.data.train.output_mean;
    CHECK((restored - result.data.latent_inputs).cwiseAbs().maxCoeff() < 1e-6);
  }
  // with e_x = 0 the shifted latent equals the plain grid latent
  CHECK((result.data.latent_grid_shifted - result.data.latent_grid).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("beta sweep compares against the true-input reference") {
  auto cfg = default_beta_config();
  cfg.mc_runs = 2;
  cfg.array_centers = 5;  // 150 points for a smoke run
  cfg.grid_resolution = 8;
  cfg.seed = 3;
  const auto result = run_beta_sweep(cfg, {0.01, 0.1});
  REQUIRE(result.cells.size() == 2);
  for (const auto& cell : result.cells) {
    CHECK(cell.baseline_runs.size() == static_cast<std::size_t>(cfg.mc_runs));
    for (const auto& rec : cell.baseline_runs) {
      CHECK(rec.rmse == 0.0);  // the reference is compared against itself
      CHECK(rec.method == Method::GP);
    }
    for (const auto& agg : cell.aggregates) {
      CHECK(agg.mean_rmse > 0.0);
      CHECK(std::isfinite(agg.mean_variance));
    }
  }
}
