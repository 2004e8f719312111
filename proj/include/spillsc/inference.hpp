#ifndef SPILLSC_INFERENCE_HPP
#define SPILLSC_INFERENCE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"
#include "spillsc/panel.hpp"
#include "spillsc/scm.hpp"
#include "spillsc/spillover.hpp"

namespace spillsc {

// Exact empirical quantile under the inf definition: the smallest sample
// value x with F_hat(x) >= p, i.e. the ceil(p*n)-th order statistic.
// p = 0 has every value feasible, so the infimum is -infinity.
inline double empirical_quantile_level(const std::vector<double>& values, double p) {
  if (values.empty()) throw domain_error("empirical_quantile: empty sample");
  if (p < 0.0 || p > 1.0) throw config_error("empirical_quantile: level outside [0, 1]");
  const int n = static_cast<int>(values.size());
  const int idx = static_cast<int>(std::ceil(p * n));
  if (idx <= 0) return -std::numeric_limits<double>::infinity();
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  return sorted[static_cast<std::size_t>(std::min(idx, n) - 1)];
}

// Critical value q_{1-tau}: the ceil((1-tau)*n)-th order statistic.
inline double empirical_quantile(const std::vector<double>& values, double tau) {
  if (tau <= 0.0 || tau > 1.0) throw config_error("empirical_quantile: tau outside (0, 1]");
  return empirical_quantile_level(values, 1.0 - tau);
}

enum class TestWeighting { identity, studentized, custom };

// Null hypothesis C alpha = d with significance level tau and the weighting
// used in the quadratic-form statistic.
struct HypothesisSpec {
  Eigen::MatrixXd C;  // r x N
  Eigen::VectorXd d;  // r
  double tau = 0.05;
  TestWeighting weighting = TestWeighting::identity;
  Eigen::MatrixXd W;  // custom r x r weighting matrix

  // Treated unit's effect is zero.
  static HypothesisSpec treatment_zero(int n_units, double tau = 0.05) {
    HypothesisSpec h;
    h.C = Eigen::MatrixXd::Zero(1, n_units);
    h.C(0, 0) = 1.0;
    h.d = Eigen::VectorXd::Zero(1);
    h.tau = tau;
    return h;
  }
  // No control unit receives any spillover.
  static HypothesisSpec spillover_zero(int n_units, double tau = 0.05) {
    HypothesisSpec h;
    h.C = Eigen::MatrixXd::Zero(n_units - 1, n_units);
    h.C.rightCols(n_units - 1) = Eigen::MatrixXd::Identity(n_units - 1, n_units - 1);
    h.d = Eigen::VectorXd::Zero(n_units - 1);
    h.tau = tau;
    return h;
  }
};

inline void validate_hypothesis(const HypothesisSpec& hyp, int n_units) {
  const int r = static_cast<int>(hyp.C.rows());
  if (r < 1) throw config_error("hypothesis: C needs at least one row");
  if (static_cast<int>(hyp.C.cols()) != n_units) {
    throw config_error("hypothesis: C has " + std::to_string(hyp.C.cols()) +
                       " columns, panel has " + std::to_string(n_units) + " units");
  }
  if (hyp.d.size() != r) throw config_error("hypothesis: d length != rows of C");
  if (!hyp.C.allFinite() || !hyp.d.allFinite()) throw config_error("hypothesis: non-finite C or d");
  if (!(hyp.tau > 0.0 && hyp.tau <= 1.0)) throw config_error("hypothesis: tau outside (0, 1]");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(hyp.C);
  const auto& sv = svd.singularValues();
  if (sv.size() < r || sv.minCoeff() <= 1e-10 * sv.maxCoeff()) {
    throw config_error("hypothesis: C full row rank required");
  }
  if (hyp.weighting == TestWeighting::custom) {
    if (hyp.W.rows() != r || hyp.W.cols() != r) {
      throw config_error("hypothesis: custom weighting must be r x r");
    }
    if (!hyp.W.allFinite()) throw config_error("hypothesis: non-finite weighting");
  }
}

// Outcome of one empirical-quantile test.
struct TestResult {
  std::string kind;
  double statistic = 0.0;
  std::vector<double> null_sample;
  double critical_value = 0.0;
  double p_value = 0.0;
  bool reject = false;
  double tau = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline TestResult finish_test(std::string kind, double statistic, std::vector<double> null_sample,
                              double tau) {
  TestResult result;
  result.kind = std::move(kind);
  result.statistic = statistic;
  result.tau = tau;
  result.critical_value = empirical_quantile(null_sample, tau);
  int at_least = 0;
  for (double v : null_sample) {
    if (v >= statistic) ++at_least;
  }
  result.p_value = static_cast<double>(at_least) / static_cast<double>(null_sample.size());
  result.reject = statistic > result.critical_value;
  result.null_sample = std::move(null_sample);
  return result;
}

}  // namespace detail

// Per-period leave-one-out refits: fits[t] excludes pre period t from every
// unit's regression, and u.row(t) is period t's residual under that refit.
struct LooFits {
  std::vector<SCMFit> fits;
  Eigen::MatrixXd u;  // T x N
};

inline LooFits compute_loo_fits(const PanelData& panel,
                                const CovariatePanel* covariates = nullptr,
                                const SCMOptions& opts = {}) {
  const int T = panel.T;
  const int N = panel.n_units();
  if (T < 3) throw config_error("compute_loo_fits: needs at least 3 pre-treatment periods");
  const int p = covariates ? covariates->p() : 0;

  std::vector<std::string> period_labels;
  period_labels.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) period_labels.push_back(std::to_string(t));

  LooFits out;
  out.fits.reserve(static_cast<std::size_t>(T));
  out.u.resize(T, N);
  for (int t = 0; t < T; ++t) {
    // Reduced panel: the held-out period moves to the single post slot.
    Eigen::MatrixXd outcomes(N, T);
    int col = 0;
    for (int s = 0; s < T; ++s) {
      if (s == t) continue;
      outcomes.col(col++) = panel.outcomes.col(s);
    }
    outcomes.col(T - 1) = panel.outcomes.col(t);
    PanelData reduced = make_panel(std::move(outcomes), panel.unit_labels, period_labels, T - 1, 1);

    CovariatePanel reduced_cov;
    const CovariatePanel* rc = nullptr;
    if (p > 0) {
      reduced_cov.covariates.reserve(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) {
        const auto& z = covariates->covariates[static_cast<std::size_t>(i)];
        Eigen::MatrixXd zr(T, p);
        int row = 0;
        for (int s = 0; s < T; ++s) {
          if (s == t) continue;
          zr.row(row++) = z.row(s);
        }
        zr.row(T - 1) = z.row(t);
        reduced_cov.covariates.push_back(std::move(zr));
      }
      rc = &reduced_cov;
    }

    SCMFit fit = fit_all(reduced, rc, opts);
    const Eigen::VectorXd y_held = panel.outcomes.col(t);
    out.u.row(t) =
        (fit.I_minus_B() * y_held - fit.intercepts - fit.g_hat.row(T - 1).transpose()).transpose();
    out.fits.push_back(std::move(fit));
  }
  return out;
}

// Shared knobs for the empirical-quantile tests.
struct TestOptions {
  int t_post = -1;                  // default: first post-treatment period
  bool loo = false;                 // leave-one-out null sample
  const CovariatePanel* covariates = nullptr;
  SCMOptions scm{};
  const LooFits* loo_fits = nullptr;  // reuse precomputed refits when loo = true
  Weighting est_weighting = Weighting::identity();
  double cond_threshold = 1e8;
};

namespace detail {

inline int resolve_post_period(const PanelData& panel, int t_post, const char* who) {
  if (t_post < 0) return panel.T;
  if (t_post < panel.T || t_post >= panel.n_periods()) {
    throw domain_error(std::string(who) + ": period index " + std::to_string(t_post) +
                       " is not a post-treatment period");
  }
  return t_post;
}

}  // namespace detail

// End-of-sample instability test on the treated unit's squared residual:
// P = u_{1,t_post}^2 against the pre-treatment squared residuals, which are
// exchangeable with it under the no-effect null.
inline TestResult andrews_p_test(const SCMFit& fit, const PanelData& panel, double tau = 0.05,
                                 const TestOptions& topts = {}) {
  if (!(tau > 0.0 && tau <= 1.0)) throw config_error("andrews_p_test: tau outside (0, 1]");
  const int t_post = detail::resolve_post_period(panel, topts.t_post, "andrews_p_test");
  const int T = panel.T;
  const double gap = scm_gap(fit, panel, t_post);
  const double statistic = gap * gap;

  std::vector<double> null_sample(static_cast<std::size_t>(T));
  if (topts.loo) {
    LooFits local;
    const LooFits* loo = topts.loo_fits;
    if (loo == nullptr) {
      local = compute_loo_fits(panel, topts.covariates, topts.scm);
      loo = &local;
    }
    for (int t = 0; t < T; ++t) {
      null_sample[static_cast<std::size_t>(t)] = loo->u(t, 0) * loo->u(t, 0);
    }
  } else {
    for (int t = 0; t < T; ++t) {
      null_sample[static_cast<std::size_t>(t)] = fit.residuals(t, 0) * fit.residuals(t, 0);
    }
  }
  return detail::finish_test("instability", statistic, std::move(null_sample), tau);
}

namespace detail {

// W_T for the adjusted-effect statistic; appends a warning when the
// studentizing matrix is singular and identity is used instead.
inline Eigen::MatrixXd resolve_test_weight(const HypothesisSpec& hyp, const SCMFit& fit,
                                           const Eigen::MatrixXd& G,
                                           std::vector<std::string>& warnings) {
  const int r = static_cast<int>(hyp.C.rows());
  switch (hyp.weighting) {
    case TestWeighting::identity:
      return Eigen::MatrixXd::Identity(r, r);
    case TestWeighting::custom:
      return hyp.W;
    case TestWeighting::studentized: {
      const int T = static_cast<int>(fit.residuals.rows());
      const Eigen::MatrixXd omega =
          fit.residuals.transpose() * fit.residuals / static_cast<double>(T);
      const Eigen::MatrixXd CG = hyp.C * G;
      const Eigen::MatrixXd S = CG * omega * CG.transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
      if (!lu.isInvertible()) {
        warnings.push_back(
            "studentizing matrix is singular; falling back to identity weighting");
        return Eigen::MatrixXd::Identity(r, r);
      }
      Eigen::MatrixXd W = lu.inverse();
      if (!W.allFinite()) {
        warnings.push_back(
            "studentizing matrix is singular; falling back to identity weighting");
        return Eigen::MatrixXd::Identity(r, r);
      }
      return W;
    }
  }
  throw config_error("hypothesis: unknown weighting");
}

}  // namespace detail

// Adjusted-effect test: P = (C alpha_hat - d)' W_T (C alpha_hat - d) with the
// null sample built by pushing pre-treatment residuals through the same
// projection. loo replaces both the residual and its projection with the
// per-period refits.
inline TestResult spillover_p_test(const SCMFit& fit, const PanelData& panel,
                                   const SpilloverStructure& structure, const HypothesisSpec& hyp,
                                   const TestOptions& topts = {}) {
  validate_hypothesis(hyp, panel.n_units());
  const int t_post = detail::resolve_post_period(panel, topts.t_post, "spillover_p_test");
  const int T = panel.T;

  const EffectEstimate est = estimate_effects(fit, panel, structure, topts.est_weighting, t_post,
                                              topts.cond_threshold);
  const Eigen::MatrixXd G =
      projection_G(fit, structure, topts.est_weighting, topts.cond_threshold);

  std::vector<std::string> warnings;
  const Eigen::MatrixXd W_T = detail::resolve_test_weight(hyp, fit, G, warnings);
  const Eigen::VectorXd dev = hyp.C * est.alpha - hyp.d;
  const double statistic = dev.dot(W_T * dev);

  std::vector<double> null_sample(static_cast<std::size_t>(T));
  if (topts.loo) {
    LooFits local;
    const LooFits* loo = topts.loo_fits;
    if (loo == nullptr) {
      local = compute_loo_fits(panel, topts.covariates, topts.scm);
      loo = &local;
    }
    for (int t = 0; t < T; ++t) {
      const Eigen::MatrixXd G_t = projection_G(loo->fits[static_cast<std::size_t>(t)], structure,
                                               topts.est_weighting, topts.cond_threshold);
      const Eigen::VectorXd s = hyp.C * (G_t * loo->u.row(t).transpose());
      null_sample[static_cast<std::size_t>(t)] = s.dot(W_T * s);
    }
  } else {
    const Eigen::MatrixXd CG = hyp.C * G;
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd s = CG * fit.residuals.row(t).transpose();
      null_sample[static_cast<std::size_t>(t)] = s.dot(W_T * s);
    }
  }
  TestResult result = detail::finish_test("spillover", statistic, std::move(null_sample), hyp.tau);
  result.warnings = std::move(warnings);
  return result;
}

// Joint test over all m post periods: the statistic sums the per-period
// quadratic forms and the null sample sums length-m rolling windows that stay
// entirely inside the pre-treatment span. C, tau, and the weighting must be
// shared across periods; d may vary.
inline TestResult joint_p_test(const SCMFit& fit, const PanelData& panel,
                               const std::vector<SpilloverStructure>& structures,
                               const std::vector<HypothesisSpec>& hyps,
                               const TestOptions& topts = {}) {
  const int T = panel.T;
  const int m = panel.m;
  if (m > T) throw config_error("joint_p_test: more post periods than pre periods");
  if (structures.empty() || !(static_cast<int>(structures.size()) == 1 ||
                              static_cast<int>(structures.size()) == m)) {
    throw config_error("joint_p_test: need 1 shared structure or one per post period");
  }
  for (std::size_t s = 1; s < structures.size(); ++s) {
    if (structures[s].A != structures.front().A) {
      throw config_error("joint_p_test: per-period structures must share the same A matrix");
    }
  }
  if (hyps.empty() ||
      !(static_cast<int>(hyps.size()) == 1 || static_cast<int>(hyps.size()) == m)) {
    throw config_error("joint_p_test: need 1 shared hypothesis or one per post period");
  }
  const HypothesisSpec& base = hyps.front();
  validate_hypothesis(base, panel.n_units());
  for (std::size_t s = 1; s < hyps.size(); ++s) {
    validate_hypothesis(hyps[s], panel.n_units());
    if (hyps[s].C != base.C || hyps[s].tau != base.tau ||
        hyps[s].weighting != base.weighting ||
        (base.weighting == TestWeighting::custom && hyps[s].W != base.W)) {
      throw config_error("joint_p_test: C, tau, and weighting must be shared; only d may vary");
    }
  }

  const SpilloverStructure& structure = structures.front();
  const Eigen::MatrixXd G =
      projection_G(fit, structure, topts.est_weighting, topts.cond_threshold);
  std::vector<std::string> warnings;
  const Eigen::MatrixXd W_T = detail::resolve_test_weight(base, fit, G, warnings);

  double statistic = 0.0;
  for (int s = 0; s < m; ++s) {
    const HypothesisSpec& hyp = hyps.size() == 1 ? base : hyps[static_cast<std::size_t>(s)];
    const EffectEstimate est = estimate_effects(fit, panel, structure, topts.est_weighting,
                                                T + s, topts.cond_threshold);
    const Eigen::VectorXd dev = hyp.C * est.alpha - hyp.d;
    statistic += dev.dot(W_T * dev);
  }

  std::vector<double> per_period(static_cast<std::size_t>(T));
  if (topts.loo) {
    LooFits local;
    const LooFits* loo = topts.loo_fits;
    if (loo == nullptr) {
      local = compute_loo_fits(panel, topts.covariates, topts.scm);
      loo = &local;
    }
    for (int t = 0; t < T; ++t) {
      const Eigen::MatrixXd G_t = projection_G(loo->fits[static_cast<std::size_t>(t)], structure,
                                               topts.est_weighting, topts.cond_threshold);
      const Eigen::VectorXd s = base.C * (G_t * loo->u.row(t).transpose());
      per_period[static_cast<std::size_t>(t)] = s.dot(W_T * s);
    }
  } else {
    const Eigen::MatrixXd CG = base.C * G;
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd s = CG * fit.residuals.row(t).transpose();
      per_period[static_cast<std::size_t>(t)] = s.dot(W_T * s);
    }
  }
  std::vector<double> null_sample(static_cast<std::size_t>(T - m + 1));
  for (int t = 0; t + m <= T; ++t) {
    double sum = 0.0;
    for (int s = 0; s < m; ++s) sum += per_period[static_cast<std::size_t>(t + s)];
    null_sample[static_cast<std::size_t>(t)] = sum;
  }
  TestResult result = detail::finish_test("joint", statistic, std::move(null_sample), base.tau);
  result.warnings = std::move(warnings);
  return result;
}

// Cross-sectional placebo: the treated unit's squared post-period residual is
// ranked within the same quantity computed for every unit. The treated unit
// stays in the comparison sample, so the statistic can never exceed the
// sample maximum; small panels therefore cannot reject at small tau.
inline TestResult placebo_test(const SCMFit& fit, const PanelData& panel, double tau = 0.05,
                               int t_post = -1) {
  if (!(tau > 0.0 && tau <= 1.0)) throw config_error("placebo_test: tau outside (0, 1]");
  t_post = detail::resolve_post_period(panel, t_post, "placebo_test");
  const int N = panel.n_units();
  const Eigen::VectorXd y = panel.outcomes.col(t_post);
  const Eigen::VectorXd u =
      fit.I_minus_B() * y - fit.intercepts - fit.g_hat.row(t_post).transpose();
  std::vector<double> null_sample(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) null_sample[static_cast<std::size_t>(i)] = u[i] * u[i];
  return detail::finish_test("placebo", u[0] * u[0], std::move(null_sample), tau);
}

// Equal-tailed interval for the scalar effect contrast c'alpha, inverted from
// the signed null sample {c G u_t}.
struct EffectInterval {
  double lo = 0.0;
  double hi = 0.0;
  double point = 0.0;
  double level = 0.0;
};

inline EffectInterval effect_confidence_interval(const SCMFit& fit, const PanelData& panel,
                                                 const SpilloverStructure& structure,
                                                 const Eigen::RowVectorXd& c, double tau = 0.10,
                                                 const TestOptions& topts = {}) {
  if (c.size() != panel.n_units()) {
    throw config_error("effect_confidence_interval: contrast length != unit count");
  }
  if (!(tau > 0.0 && tau < 1.0)) {
    throw config_error("effect_confidence_interval: tau outside (0, 1)");
  }
  const int t_post = detail::resolve_post_period(panel, topts.t_post, "effect_confidence_interval");
  const int T = panel.T;
  const EffectEstimate est = estimate_effects(fit, panel, structure, topts.est_weighting, t_post,
                                              topts.cond_threshold);
  const double point = c * est.alpha;

  std::vector<double> signed_null(static_cast<std::size_t>(T));
  if (topts.loo) {
    LooFits local;
    const LooFits* loo = topts.loo_fits;
    if (loo == nullptr) {
      local = compute_loo_fits(panel, topts.covariates, topts.scm);
      loo = &local;
    }
    for (int t = 0; t < T; ++t) {
      const Eigen::MatrixXd G_t = projection_G(loo->fits[static_cast<std::size_t>(t)], structure,
                                               topts.est_weighting, topts.cond_threshold);
      signed_null[static_cast<std::size_t>(t)] = c * (G_t * loo->u.row(t).transpose());
    }
  } else {
    const Eigen::MatrixXd G =
        projection_G(fit, structure, topts.est_weighting, topts.cond_threshold);
    const Eigen::RowVectorXd cG = c * G;
    for (int t = 0; t < T; ++t) {
      signed_null[static_cast<std::size_t>(t)] = cG * fit.residuals.row(t).transpose();
    }
  }
  EffectInterval interval;
  interval.point = point;
  interval.level = 1.0 - tau;
  interval.lo = point - empirical_quantile_level(signed_null, 1.0 - tau / 2.0);
  interval.hi = point - empirical_quantile_level(signed_null, tau / 2.0);
  return interval;
}

}  // namespace spillsc

#endif
