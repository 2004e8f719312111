#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "spillsc/dgp.hpp"
#include "spillsc/inference.hpp"
#include "spillsc/montecarlo.hpp"
#include "spillsc/rng.hpp"
#include "spillsc/scm.hpp"
#include "spillsc/spillover.hpp"

using namespace spillsc;

TEST_CASE("a single-replication experiment equals the direct computation") {
  EstimationExperimentSpec spec = effect_cell_spec(10, 40, "concentrated", 1, 777);
  const EstimatorStats stats = run_estimation_experiment(spec);
  REQUIRE(stats.reps == 1);
  REQUIRE(stats.failures == 0);
  REQUIRE(stats.true_effect == 5.0);

  const std::uint64_t seed = derive_seed(777, hash_label(spec.cell_id), 1);
  const PanelData base = simulate_stationary(spec.stationary, seed);
  const PanelData panel = apply_effects(base, spec.effects);
  const SCMFit fit = fit_all(panel);
  const SpilloverStructure structure = build_structure(spec.structure, 10);
  const EffectEstimate est =
      estimate_effects(fit, panel, structure, Weighting::identity(), panel.T);

  REQUIRE(stats.scm_estimates.size() == 1);
  REQUIRE(stats.scm_estimates[0] == scm_gap(fit, panel, panel.T));
  REQUIRE(stats.sp_estimates[0] == est.alpha[0]);
  REQUIRE(stats.scm_bias == stats.scm_estimates[0] - 5.0);
  REQUIRE(stats.sp_bias == stats.sp_estimates[0] - 5.0);
  // A single draw has no sample variance.
  REQUIRE(std::isnan(stats.scm_variance));
  REQUIRE(std::isnan(stats.sp_variance));
}

TEST_CASE("estimation experiments are bitwise identical across thread counts") {
  EstimationExperimentSpec spec = effect_cell_spec(10, 30, "spreadout", 24, 31337);
  spec.threads = 1;
  const EstimatorStats a = run_estimation_experiment(spec);
  spec.threads = 4;
  const EstimatorStats b = run_estimation_experiment(spec);
  REQUIRE(a.scm_estimates == b.scm_estimates);
  REQUIRE(a.sp_estimates == b.sp_estimates);
  REQUIRE(a.scm_bias == b.scm_bias);
  REQUIRE(a.sp_variance == b.sp_variance);
  REQUIRE(a.failed == b.failed);

  // Changing the master seed changes the draws.
  EstimationExperimentSpec other = effect_cell_spec(10, 30, "spreadout", 24, 31338);
  const EstimatorStats c = run_estimation_experiment(other);
  REQUIRE(a.scm_estimates != c.scm_estimates);

  // Changing only the cell id also changes the draws: the cell label salts
  // the replication seeds.
  EstimationExperimentSpec renamed = effect_cell_spec(10, 30, "spreadout", 24, 31337);
  renamed.cell_id = "another-cell";
  const EstimatorStats d = run_estimation_experiment(renamed);
  REQUIRE(a.scm_estimates != d.scm_estimates);
}

TEST_CASE("size and power runs are deterministic and tau = 1 rejects everything") {
  SizePowerSpec spec = rate_cell_spec(10, 30, "none", false, 12, 909);
  spec.loo = true;
  spec.threads = 1;
  const RateStats a = run_size_power_experiment(spec);
  spec.threads = 3;
  const RateStats b = run_size_power_experiment(spec);
  REQUIRE(a.placebo_reject == b.placebo_reject);
  REQUIRE(a.andrews_reject == b.andrews_reject);
  REQUIRE(a.sp_reject == b.sp_reject);
  REQUIRE(a.failures == b.failures);
  REQUIRE(a.placebo_rate == b.placebo_rate);

  // Rates times the used replication count must be whole rejection counts.
  const int used = a.reps - a.failures;
  for (double rate : {a.placebo_rate, a.andrews_rate, a.sp_rate}) {
    const double count = rate * used;
    REQUIRE(std::abs(count - std::round(count)) < 1e-9);
    REQUIRE(rate >= 0.0);
    REQUIRE(rate <= 1.0);
  }

  // tau = 1 makes the critical value -infinity for every test.
  SizePowerSpec all_reject = rate_cell_spec(10, 30, "none", false, 8, 909);
  all_reject.tau = 1.0;
  const RateStats r = run_size_power_experiment(all_reject);
  REQUIRE(r.placebo_rate == 1.0);
  REQUIRE(r.andrews_rate == 1.0);
  REQUIRE(r.sp_rate == 1.0);
}

TEST_CASE("failure policy raises once too many replications fail") {
  // An equal-hit structure covering every control leaves the spillover
  // parameter unidentified: the invertibility condition fails in every
  // replication and the run must refuse to report statistics.
  EstimationExperimentSpec spec = effect_cell_spec(8, 25, "none", 5, 2024);
  spec.structure = StructureSpec::equal_hit({1, 2, 3, 4, 5, 6, 7});
  REQUIRE_THROWS_AS(run_estimation_experiment(spec), error);

  // Even a fully permissive failure rate cannot rescue a run with zero
  // successful replications.
  spec.max_failure_rate = 1.0;
  REQUIRE_THROWS_AS(run_estimation_experiment(spec), error);

  SizePowerSpec rates = rate_cell_spec(8, 25, "none", false, 5, 2024);
  rates.structure = StructureSpec::equal_hit({1, 2, 3, 4, 5, 6, 7});
  REQUIRE_THROWS_AS(run_size_power_experiment(rates), error);
}

TEST_CASE("experiment specifications are validated") {
  EstimationExperimentSpec spec = effect_cell_spec(10, 30, "none", 4, 1);
  spec.reps = 0;
  REQUIRE_THROWS_AS(run_estimation_experiment(spec), config_error);
  spec = effect_cell_spec(10, 30, "none", 4, 1);
  spec.threads = 0;
  REQUIRE_THROWS_AS(run_estimation_experiment(spec), config_error);
  spec = effect_cell_spec(10, 30, "none", 4, 1);
  spec.effects = EffectPattern::none(9);
  REQUIRE_THROWS_AS(run_estimation_experiment(spec), config_error);

  SizePowerSpec rates = rate_cell_spec(10, 30, "none", false, 4, 1);
  rates.tau = 0.0;
  REQUIRE_THROWS_AS(run_size_power_experiment(rates), config_error);

  REQUIRE_THROWS_AS(make_pattern("diagonal", 10), config_error);
  REQUIRE_THROWS_AS(pattern_structure("diagonal", 10), config_error);

  MisspecificationSpec mis = misspecification_preset(4, 1);
  mis.true_affected = {0};  // the treated unit is not a control
  REQUIRE_THROWS_AS(run_misspecification_sweep(mis), config_error);
  mis = misspecification_preset(4, 1);
  mis.spillover_levels = {};
  REQUIRE_THROWS_AS(run_misspecification_sweep(mis), config_error);
  mis = misspecification_preset(4, 1);
  mis.assumed_labels = {"only-one"};
  REQUIRE_THROWS_AS(run_misspecification_sweep(mis), config_error);
}

TEST_CASE("misspecification sweep produces one cell per level and structure") {
  MisspecificationSpec spec = misspecification_preset(6, 555);
  spec.stationary.n_units = 12;  // smaller design for speed
  spec.stationary.n_pre = 30;
  spec.true_affected = {1, 2, 3, 4};
  spec.assumed_affected = {{1, 2}, {1, 2, 3, 4}, {1, 2, 3, 4, 5, 6}};
  spec.spillover_levels = {0.0, 2.0};

  const std::vector<MisspecificationCell> cells = run_misspecification_sweep(spec);
  REQUIRE(cells.size() == 6);
  REQUIRE(cells[0].spillover_level == 0.0);
  REQUIRE(cells[0].structure_label == "too_few");
  REQUIRE(cells[1].structure_label == "correct");
  REQUIRE(cells[2].structure_label == "too_many");
  REQUIRE(cells[3].spillover_level == 2.0);
  for (const auto& cell : cells) {
    REQUIRE(cell.reps == 6);
    REQUIRE(cell.reject.size() == 6);
    REQUIRE(cell.rate >= 0.0);
    REQUIRE(cell.rate <= 1.0);
    const int used = cell.reps - cell.failures;
    REQUIRE(cell.se == Catch::Approx(std::sqrt(cell.rate * (1.0 - cell.rate) / used)));
  }

  // Thread count must not change any decision.
  spec.threads = 4;
  const std::vector<MisspecificationCell> again = run_misspecification_sweep(spec);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    REQUIRE(cells[i].reject == again[i].reject);
    REQUIRE(cells[i].rate == again[i].rate);
  }
}

TEST_CASE("presets encode the published designs") {
  const EstimationExperimentSpec e = effect_cell_spec(30, 200, "spreadout", 100, 9);
  REQUIRE(e.stationary.n_units == 30);
  REQUIRE(e.stationary.n_pre == 200);
  REQUIRE(e.stationary.n_post == 1);
  REQUIRE_FALSE(e.cointegrated);
  REQUIRE(e.effects.alpha[0] == 5.0);
  // floor(2 * 29 / 3) = 19 controls hit with spillover 3.
  REQUIRE(e.effects.alpha.tail(29).sum() == Catch::Approx(57.0));
  const SpilloverStructure s = build_structure(e.structure, 30);
  REQUIRE(s.k() == 20);  // treated column plus 19 affected columns

  const SizePowerSpec size_cell = rate_cell_spec(10, 50, "concentrated", false, 100, 9);
  REQUIRE(size_cell.effects.alpha[0] == 0.0);  // spillover only
  REQUIRE(size_cell.effects.alpha[1] == 3.0);
  REQUIRE(size_cell.loo);
  const SizePowerSpec power_cell = rate_cell_spec(10, 50, "concentrated", true, 100, 9);
  REQUIRE(power_cell.effects.alpha[0] == 5.0);
  REQUIRE(power_cell.cell_id != size_cell.cell_id);

  const SizePowerSpec none_cell = rate_cell_spec(10, 50, "none", false, 100, 9);
  const SpilloverStructure none_structure = build_structure(none_cell.structure, 10);
  REQUIRE(none_structure.k() == 1);  // treated column only

  const MisspecificationSpec m = misspecification_preset(100, 9);
  REQUIRE(m.stationary.n_units == 20);
  REQUIRE(m.stationary.n_pre == 50);
  REQUIRE(m.treatment == 5.0);
  REQUIRE(m.true_affected == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  REQUIRE(m.assumed_affected.size() == 3);
  REQUIRE(m.spillover_levels == std::vector<double>{0.0, 2.0});
}

TEST_CASE("a custom hypothesis flows through the rate experiment") {
  SizePowerSpec spec = rate_cell_spec(8, 25, "none", false, 6, 404);
  HypothesisSpec hyp = HypothesisSpec::spillover_zero(8);
  hyp.tau = 0.5;  // overridden by the spec's tau below
  spec.hypothesis = hyp;
  spec.tau = 1.0;
  const RateStats r = run_size_power_experiment(spec);
  // With tau forced to 1 every replication rejects, proving the custom
  // hypothesis path ran and the spec's tau overrode the hypothesis's.
  REQUIRE(r.sp_rate == 1.0);
}

TEST_CASE("estimation smoke: the unbiased design centers near the truth") {
  // No effects anywhere: both estimators target zero. A loose band checks
  // sign conventions rather than the published calibration.
  EstimationExperimentSpec spec = effect_cell_spec(10, 50, "none", 60, 20240817);
  const EstimatorStats stats = run_estimation_experiment(spec);
  REQUIRE(std::abs(stats.scm_bias) < 0.75);
  REQUIRE(std::abs(stats.sp_bias) < 0.75);
  REQUIRE(stats.scm_variance > 0.0);
  REQUIRE(stats.sp_variance > 0.0);
}
