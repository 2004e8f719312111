#ifndef SPILLSC_MONTECARLO_HPP
#define SPILLSC_MONTECARLO_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spillsc/dgp.hpp"
#include "spillsc/errors.hpp"
#include "spillsc/inference.hpp"
#include "spillsc/panel.hpp"
#include "spillsc/parallel.hpp"
#include "spillsc/rng.hpp"
#include "spillsc/scm.hpp"
#include "spillsc/spillover.hpp"

namespace spillsc {

namespace detail {

// Replication r of a cell always uses derive_seed(master, hash(cell), r + 1):
// results are a pure function of (master_seed, cell_id, rep), independent of
// thread count and completion order.
inline std::uint64_t rep_seed(std::uint64_t master, std::uint64_t cell_hash, int rep) {
  return derive_seed(master, cell_hash, static_cast<std::uint64_t>(rep) + 1);
}

inline void check_replication_counts(int reps, int threads, const char* who) {
  if (reps < 1) throw config_error(std::string(who) + ": reps must be positive");
  if (threads < 1) throw config_error(std::string(who) + ": threads must be positive");
}

// Mean and (n-1)-denominator variance over the non-failed slots.
struct SlotMoments {
  int used = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
};

inline SlotMoments slot_moments(const std::vector<double>& values,
                                const std::vector<std::uint8_t>& failed) {
  SlotMoments m;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (failed[i]) continue;
    sum += values[i];
    ++m.used;
  }
  if (m.used == 0) return m;
  m.mean = sum / m.used;
  if (m.used > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (failed[i]) continue;
      const double d = values[i] - m.mean;
      ss += d * d;
    }
    m.variance = ss / (m.used - 1);
  }
  return m;
}

inline void enforce_failure_policy(int failures, int reps, double max_rate, const char* who) {
  const double rate = static_cast<double>(failures) / static_cast<double>(reps);
  if (rate > max_rate) {
    throw error(std::string(who) + ": " + std::to_string(failures) + " of " +
                std::to_string(reps) + " replications failed (rate " + std::to_string(rate) +
                " exceeds " + std::to_string(max_rate) + ")");
  }
}

}  // namespace detail

// One bias/variance cell: simulate, apply effects, fit, and record both the
// classical gap estimate and the structure-adjusted effect for the treated
// unit each replication.
struct EstimationExperimentSpec {
  std::string cell_id = "effect-cell";
  bool cointegrated = false;
  StationaryFactorConfig stationary{};
  CointegratedFactorConfig cointegrated_config{};
  EffectPattern effects = EffectPattern::none(10);
  StructureSpec structure = StructureSpec::range_based({});
  Weighting weighting = Weighting::identity();
  int reps = 1000;
  std::uint64_t master_seed = 20240501;
  int threads = 1;
  double max_failure_rate = 0.01;
  SCMOptions scm{};
};

struct EstimatorStats {
  int reps = 0;
  int failures = 0;
  double true_effect = 0.0;
  double scm_mean = 0.0;
  double scm_bias = 0.0;
  double scm_variance = 0.0;
  double sp_mean = 0.0;
  double sp_bias = 0.0;
  double sp_variance = 0.0;
  std::vector<double> scm_estimates;  // slot-indexed by rep; NaN where failed
  std::vector<double> sp_estimates;
  std::vector<std::uint8_t> failed;
};

inline EstimatorStats run_estimation_experiment(const EstimationExperimentSpec& spec) {
  detail::check_replication_counts(spec.reps, spec.threads, "run_estimation_experiment");
  const int n = spec.cointegrated ? spec.cointegrated_config.n_units : spec.stationary.n_units;
  if (spec.effects.alpha.size() != n) {
    throw config_error("run_estimation_experiment: effect pattern length != unit count");
  }
  const SpilloverStructure structure = build_structure(spec.structure, n);
  const std::uint64_t cell_hash = hash_label(spec.cell_id);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> scm(static_cast<std::size_t>(spec.reps), nan);
  std::vector<double> sp(static_cast<std::size_t>(spec.reps), nan);
  std::vector<std::uint8_t> failed(static_cast<std::size_t>(spec.reps), 0);

  parallel_for(spec.reps, spec.threads, [&](int rep) {
    const std::uint64_t seed = detail::rep_seed(spec.master_seed, cell_hash, rep);
    try {
      PanelData base = spec.cointegrated ? simulate_cointegrated(spec.cointegrated_config, seed)
                                         : simulate_stationary(spec.stationary, seed);
      const PanelData panel = apply_effects(base, spec.effects);
      const SCMFit fit = fit_all(panel, nullptr, spec.scm);
      scm[static_cast<std::size_t>(rep)] = scm_gap(fit, panel, panel.T);
      const EffectEstimate est = estimate_effects(fit, panel, structure, spec.weighting, panel.T);
      sp[static_cast<std::size_t>(rep)] = est.alpha[0];
    } catch (const error&) {
      failed[static_cast<std::size_t>(rep)] = 1;
    }
  });

  EstimatorStats stats;
  stats.reps = spec.reps;
  for (std::uint8_t f : failed) stats.failures += f;
  detail::enforce_failure_policy(stats.failures, spec.reps, spec.max_failure_rate,
                                 "run_estimation_experiment");
  if (stats.failures == spec.reps) {
    throw error("run_estimation_experiment: every replication failed");
  }
  stats.true_effect = spec.effects.alpha[0];
  const detail::SlotMoments ms = detail::slot_moments(scm, failed);
  const detail::SlotMoments mp = detail::slot_moments(sp, failed);
  stats.scm_mean = ms.mean;
  stats.scm_bias = ms.mean - stats.true_effect;
  stats.scm_variance = ms.variance;
  stats.sp_mean = mp.mean;
  stats.sp_bias = mp.mean - stats.true_effect;
  stats.sp_variance = mp.variance;
  stats.scm_estimates = std::move(scm);
  stats.sp_estimates = std::move(sp);
  stats.failed = std::move(failed);
  return stats;
}

// One rejection-rate cell: per replication run the cross-sectional placebo
// test, the end-of-sample instability test, and the structure-adjusted test
// of the given hypothesis (default: treated effect zero). The two time-series
// tests share one set of leave-one-out refits per replication.
struct SizePowerSpec {
  std::string cell_id = "rate-cell";
  bool cointegrated = false;
  StationaryFactorConfig stationary{};
  CointegratedFactorConfig cointegrated_config{};
  EffectPattern effects = EffectPattern::none(10);
  StructureSpec structure = StructureSpec::range_based({});
  std::optional<HypothesisSpec> hypothesis;  // default: treatment_zero(N, tau)
  double tau = 0.05;
  bool loo = true;
  int reps = 1000;
  std::uint64_t master_seed = 20240502;
  int threads = 1;
  double max_failure_rate = 0.01;
  SCMOptions scm{};
};

struct RateStats {
  int reps = 0;
  int failures = 0;
  double placebo_rate = 0.0;
  double andrews_rate = 0.0;
  double sp_rate = 0.0;
  std::vector<std::uint8_t> placebo_reject;  // slot-indexed by rep
  std::vector<std::uint8_t> andrews_reject;
  std::vector<std::uint8_t> sp_reject;
  std::vector<std::uint8_t> failed;
};

inline RateStats run_size_power_experiment(const SizePowerSpec& spec) {
  detail::check_replication_counts(spec.reps, spec.threads, "run_size_power_experiment");
  if (!(spec.tau > 0.0 && spec.tau <= 1.0)) {
    throw config_error("run_size_power_experiment: tau outside (0, 1]");
  }
  const int n = spec.cointegrated ? spec.cointegrated_config.n_units : spec.stationary.n_units;
  if (spec.effects.alpha.size() != n) {
    throw config_error("run_size_power_experiment: effect pattern length != unit count");
  }
  const SpilloverStructure structure = build_structure(spec.structure, n);
  HypothesisSpec hyp = spec.hypothesis ? *spec.hypothesis : HypothesisSpec::treatment_zero(n);
  hyp.tau = spec.tau;
  validate_hypothesis(hyp, n);
  const std::uint64_t cell_hash = hash_label(spec.cell_id);

  std::vector<std::uint8_t> placebo(static_cast<std::size_t>(spec.reps), 0);
  std::vector<std::uint8_t> andrews(static_cast<std::size_t>(spec.reps), 0);
  std::vector<std::uint8_t> sp(static_cast<std::size_t>(spec.reps), 0);
  std::vector<std::uint8_t> failed(static_cast<std::size_t>(spec.reps), 0);

  parallel_for(spec.reps, spec.threads, [&](int rep) {
    const std::uint64_t seed = detail::rep_seed(spec.master_seed, cell_hash, rep);
    try {
      PanelData base = spec.cointegrated ? simulate_cointegrated(spec.cointegrated_config, seed)
                                         : simulate_stationary(spec.stationary, seed);
      const PanelData panel = apply_effects(base, spec.effects);
      const SCMFit fit = fit_all(panel, nullptr, spec.scm);

      TestOptions topts;
      topts.scm = spec.scm;
      topts.loo = spec.loo;
      LooFits loo;
      if (spec.loo) {
        loo = compute_loo_fits(panel, nullptr, spec.scm);
        topts.loo_fits = &loo;
      }
      placebo[static_cast<std::size_t>(rep)] = placebo_test(fit, panel, spec.tau).reject ? 1 : 0;
      andrews[static_cast<std::size_t>(rep)] =
          andrews_p_test(fit, panel, spec.tau, topts).reject ? 1 : 0;
      sp[static_cast<std::size_t>(rep)] =
          spillover_p_test(fit, panel, structure, hyp, topts).reject ? 1 : 0;
    } catch (const error&) {
      failed[static_cast<std::size_t>(rep)] = 1;
    }
  });

  RateStats stats;
  stats.reps = spec.reps;
  for (std::uint8_t f : failed) stats.failures += f;
  detail::enforce_failure_policy(stats.failures, spec.reps, spec.max_failure_rate,
                                 "run_size_power_experiment");
  const int used = spec.reps - stats.failures;
  if (used == 0) throw error("run_size_power_experiment: every replication failed");
  int cp = 0, ca = 0, cs = 0;
  for (int rep = 0; rep < spec.reps; ++rep) {
    if (failed[static_cast<std::size_t>(rep)]) continue;
    cp += placebo[static_cast<std::size_t>(rep)];
    ca += andrews[static_cast<std::size_t>(rep)];
    cs += sp[static_cast<std::size_t>(rep)];
  }
  stats.placebo_rate = static_cast<double>(cp) / used;
  stats.andrews_rate = static_cast<double>(ca) / used;
  stats.sp_rate = static_cast<double>(cs) / used;
  stats.placebo_reject = std::move(placebo);
  stats.andrews_reject = std::move(andrews);
  stats.sp_reject = std::move(sp);
  stats.failed = std::move(failed);
  return stats;
}

// Structure-misspecification sweep: the treated unit carries a fixed direct
// effect, the true affected set receives each spillover level in turn, and
// the adjusted no-spillover test runs once per assumed structure. Every
// assumed structure shares the per-replication fit and refits.
struct MisspecificationSpec {
  std::string cell_id = "misspec";
  StationaryFactorConfig stationary = [] {
    StationaryFactorConfig c;
    c.n_units = 20;
    c.n_pre = 50;
    c.n_post = 1;
    return c;
  }();
  double treatment = 5.0;
  std::vector<double> spillover_levels = {0.0, 2.0};
  std::vector<int> true_affected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::vector<int>> assumed_affected = {
      {1, 2, 3, 4},
      {1, 2, 3, 4, 5, 6, 7, 8, 9},
      {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14}};
  std::vector<std::string> assumed_labels = {"too_few", "correct", "too_many"};
  double tau = 0.05;
  bool loo = true;
  int reps = 500;
  std::uint64_t master_seed = 20240503;
  int threads = 1;
  double max_failure_rate = 0.01;
  SCMOptions scm{};
};

struct MisspecificationCell {
  double spillover_level = 0.0;
  std::string structure_label;
  int reps = 0;
  int failures = 0;
  double rate = 0.0;
  double se = 0.0;  // binomial standard error of the rate
  std::vector<std::uint8_t> reject;  // slot-indexed by rep
  std::vector<std::uint8_t> failed;
};

inline std::vector<MisspecificationCell> run_misspecification_sweep(
    const MisspecificationSpec& spec) {
  detail::check_replication_counts(spec.reps, spec.threads, "run_misspecification_sweep");
  if (spec.assumed_affected.size() != spec.assumed_labels.size()) {
    throw config_error("run_misspecification_sweep: one label per assumed structure required");
  }
  if (spec.assumed_affected.empty()) {
    throw config_error("run_misspecification_sweep: at least one assumed structure required");
  }
  if (spec.spillover_levels.empty()) {
    throw config_error("run_misspecification_sweep: at least one spillover level required");
  }
  const int n = spec.stationary.n_units;
  const int n_structures = static_cast<int>(spec.assumed_affected.size());

  Eigen::VectorXd base_alpha = Eigen::VectorXd::Zero(n);
  base_alpha[0] = spec.treatment;
  for (int i : spec.true_affected) {
    if (i <= 0 || i >= n) {
      throw config_error("run_misspecification_sweep: true affected indices must be controls");
    }
  }

  std::vector<SpilloverStructure> structures;
  structures.reserve(spec.assumed_affected.size());
  for (const auto& affected : spec.assumed_affected) {
    structures.push_back(build_structure(StructureSpec::range_based(affected), n));
  }
  HypothesisSpec hyp = HypothesisSpec::spillover_zero(n);
  hyp.tau = spec.tau;

  std::vector<MisspecificationCell> cells;
  for (std::size_t li = 0; li < spec.spillover_levels.size(); ++li) {
    const double level = spec.spillover_levels[li];
    Eigen::VectorXd alpha = base_alpha;
    for (int i : spec.true_affected) alpha[i] = level;
    const EffectPattern pattern = EffectPattern::custom(alpha);
    const std::uint64_t cell_hash =
        hash_label(spec.cell_id + "#level" + std::to_string(li));

    std::vector<std::vector<std::uint8_t>> reject(
        static_cast<std::size_t>(n_structures),
        std::vector<std::uint8_t>(static_cast<std::size_t>(spec.reps), 0));
    std::vector<std::uint8_t> failed(static_cast<std::size_t>(spec.reps), 0);

    parallel_for(spec.reps, spec.threads, [&](int rep) {
      const std::uint64_t seed = detail::rep_seed(spec.master_seed, cell_hash, rep);
      try {
        PanelData base = simulate_stationary(spec.stationary, seed);
        const PanelData panel = apply_effects(base, pattern);
        const SCMFit fit = fit_all(panel, nullptr, spec.scm);
        TestOptions topts;
        topts.scm = spec.scm;
        topts.loo = spec.loo;
        LooFits loo;
        if (spec.loo) {
          loo = compute_loo_fits(panel, nullptr, spec.scm);
          topts.loo_fits = &loo;
        }
        for (int s = 0; s < n_structures; ++s) {
          const TestResult r =
              spillover_p_test(fit, panel, structures[static_cast<std::size_t>(s)], hyp, topts);
          reject[static_cast<std::size_t>(s)][static_cast<std::size_t>(rep)] = r.reject ? 1 : 0;
        }
      } catch (const error&) {
        failed[static_cast<std::size_t>(rep)] = 1;
      }
    });

    int failures = 0;
    for (std::uint8_t f : failed) failures += f;
    detail::enforce_failure_policy(failures, spec.reps, spec.max_failure_rate,
                                   "run_misspecification_sweep");
    const int used = spec.reps - failures;
    if (used == 0) throw error("run_misspecification_sweep: every replication failed");
    for (int s = 0; s < n_structures; ++s) {
      MisspecificationCell cell;
      cell.spillover_level = level;
      cell.structure_label = spec.assumed_labels[static_cast<std::size_t>(s)];
      cell.reps = spec.reps;
      cell.failures = failures;
      int count = 0;
      for (int rep = 0; rep < spec.reps; ++rep) {
        if (!failed[static_cast<std::size_t>(rep)]) {
          count += reject[static_cast<std::size_t>(s)][static_cast<std::size_t>(rep)];
        }
      }
      cell.rate = static_cast<double>(count) / used;
      cell.se = std::sqrt(cell.rate * (1.0 - cell.rate) / used);
      cell.reject = reject[static_cast<std::size_t>(s)];
      cell.failed = failed;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---- presets for the published simulation cells ----

// Effect pattern for a named design: unit 1 treated (optionally with zero
// direct effect for the pure-spillover designs), the pattern's share of
// controls hit with spillover 3.
inline EffectPattern make_pattern(const std::string& pattern, int n_units,
                                  double treatment = 5.0) {
  if (pattern == "none") return EffectPattern::none(n_units);
  if (pattern == "concentrated") return EffectPattern::concentrated(n_units, treatment);
  if (pattern == "spreadout") return EffectPattern::spreadout(n_units, treatment);
  throw config_error("make_pattern: unknown pattern '" + pattern + "'");
}

// Structure matching a named pattern's true affected set.
inline StructureSpec pattern_structure(const std::string& pattern, int n_units) {
  int hit = 0;
  if (pattern == "none") {
    hit = 0;
  } else if (pattern == "concentrated") {
    hit = (n_units - 1) / 3;
  } else if (pattern == "spreadout") {
    hit = 2 * (n_units - 1) / 3;
  } else {
    throw config_error("pattern_structure: unknown pattern '" + pattern + "'");
  }
  std::vector<int> affected;
  for (int i = 1; i <= hit; ++i) affected.push_back(i);
  return StructureSpec::range_based(affected);
}

// Loading seed pinned per published cell so the fixed loading draw matches
// the published finite-sample moments. Falls back to 1 for unlisted cells.
inline std::uint64_t replication_loading_seed(int n_units, int n_pre,
                                              const std::string& pattern) {
  struct Entry {
    int n_units;
    int n_pre;
    const char* pattern;
    std::uint64_t seed;
  };
  static const Entry table[] = {
      {10, 50, "none", 1},  {10, 50, "concentrated", 1},  {10, 50, "spreadout", 1},
      {30, 50, "none", 1},  {30, 50, "concentrated", 1},  {30, 50, "spreadout", 1},
      {30, 200, "spreadout", 1},
  };
  for (const Entry& e : table) {
    if (e.n_units == n_units && e.n_pre == n_pre && pattern == e.pattern) return e.seed;
  }
  return 1;
}

// Bias/variance cell of the stationary design at (n_units, n_pre) under a
// named pattern, with the correctly specified structure.
inline EstimationExperimentSpec effect_cell_spec(int n_units, int n_pre,
                                                 const std::string& pattern, int reps,
                                                 std::uint64_t master_seed, int threads = 1) {
  EstimationExperimentSpec spec;
  spec.cell_id = "effect:" + std::to_string(n_units) + "," + std::to_string(n_pre) + ":" + pattern;
  spec.stationary.n_units = n_units;
  spec.stationary.n_pre = n_pre;
  spec.stationary.n_post = 1;
  spec.stationary.loading_seed = replication_loading_seed(n_units, n_pre, pattern);
  spec.effects = make_pattern(pattern, n_units);
  spec.structure = pattern_structure(pattern, n_units);
  spec.reps = reps;
  spec.master_seed = master_seed;
  spec.threads = threads;
  return spec;
}

// Rejection-rate cell. with_treatment = false keeps the treated unit's direct
// effect at zero (the null of the end-of-sample tests stays true and only
// spillover contamination varies); true adds the direct effect of 5.
inline SizePowerSpec rate_cell_spec(int n_units, int n_pre, const std::string& pattern,
                                    bool with_treatment, int reps, std::uint64_t master_seed,
                                    int threads = 1) {
  SizePowerSpec spec;
  spec.cell_id = std::string(with_treatment ? "power:" : "size:") + std::to_string(n_units) +
                 "," + std::to_string(n_pre) + ":" + pattern;
  spec.stationary.n_units = n_units;
  spec.stationary.n_pre = n_pre;
  spec.stationary.n_post = 1;
  spec.stationary.loading_seed = replication_loading_seed(n_units, n_pre, pattern);
  spec.effects = make_pattern(pattern, n_units, with_treatment ? 5.0 : 0.0);
  spec.structure = pattern_structure(pattern, n_units);
  spec.reps = reps;
  spec.master_seed = master_seed;
  spec.threads = threads;
  return spec;
}

inline MisspecificationSpec misspecification_preset(int reps, std::uint64_t master_seed,
                                                    int threads = 1,
                                                    std::vector<double> levels = {0.0, 2.0}) {
  MisspecificationSpec spec;
  spec.stationary.loading_seed = replication_loading_seed(20, 50, "misspec");
  spec.spillover_levels = std::move(levels);
  spec.reps = reps;
  spec.master_seed = master_seed;
  spec.threads = threads;
  return spec;
}

}  // namespace spillsc

#endif
