#ifndef SPILLSC_SCM_HPP
#define SPILLSC_SCM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"
#include "spillsc/panel.hpp"
#include "spillsc/solver.hpp"

namespace spillsc {

struct SCMOptions {
  SimplexLSOptions solver{};
  int max_outer = 500;       // covariate block-coordinate sweeps
  double outer_tol = 1e-12;  // stop when the objective improves by less
};

// Weight fit for one unit regressed on the remaining units. weights has
// length N with weights[unit] == 0 exactly; donors live at the other slots.
struct UnitFit {
  int unit = -1;
  double intercept = 0.0;
  Eigen::VectorXd weights;
  Eigen::VectorXd covariate_coef;  // empty when fit without covariates
  double objective = 0.0;          // mean squared residual of the full model
  double kkt_gap = 0.0;
  long long iterations = 0;  // simplex-solver iterations, summed over sweeps
  bool degenerate = false;
};

// Whole-system fit: every unit synthesized from the others.
// residuals row t is u_t' where u_t = (I - B)Y_t - a - g_t, pre periods only.
// g_hat(t, i) = z_{i,t}' pi_i covers all T + m periods (zero without covariates).
struct SCMFit {
  Eigen::VectorXd intercepts;
  Eigen::MatrixXd weight_matrix;  // N x N, zero diagonal, rows on the simplex
  Eigen::MatrixXd residuals;      // T x N
  Eigen::MatrixXd g_hat;          // (T + m) x N
  std::vector<UnitFit> unit_fits;
  bool has_covariates = false;

  int n_units() const { return static_cast<int>(weight_matrix.rows()); }

  Eigen::MatrixXd I_minus_B() const {
    const int N = n_units();
    return Eigen::MatrixXd::Identity(N, N) - weight_matrix;
  }

  // M = (I - B)'(I - B): symmetric positive semi-definite by construction.
  Eigen::MatrixXd M() const {
    const Eigen::MatrixXd ib = I_minus_B();
    return ib.transpose() * ib;
  }
};

namespace detail {

inline void check_covariates(const PanelData& panel, const CovariatePanel* covariates) {
  if (covariates == nullptr || covariates->p() == 0) return;
  if (static_cast<int>(covariates->covariates.size()) != panel.n_units()) {
    throw config_error("fit: covariate series count != unit count");
  }
  for (const auto& z : covariates->covariates) {
    if (static_cast<int>(z.rows()) != panel.n_periods()) {
      throw config_error("fit: covariate rows != panel periods");
    }
  }
}

}  // namespace detail

// Least-squares fit of unit i on the other units with intercept, weights on
// the simplex, and (optionally) free covariate coefficients. Only the T
// pre-treatment columns are read. The covariate path alternates between the
// simplex solve at fixed pi and the unconstrained pi regression at fixed
// (a, b); both steps lower the jointly convex objective, so the loop stops on
// a vanishing improvement.
inline UnitFit fit_unit(const PanelData& panel, int i,
                        const CovariatePanel* covariates = nullptr,
                        const SCMOptions& opts = {}) {
  const int N = panel.n_units();
  const int T = panel.T;
  if (i < 0 || i >= N) {
    throw config_error("fit_unit: unit index " + std::to_string(i) + " outside 0.." +
                       std::to_string(N - 1));
  }
  detail::check_covariates(panel, covariates);
  if (opts.max_outer < 1) throw config_error("fit_unit: max_outer must be >= 1");
  if (!(opts.outer_tol > 0.0)) throw config_error("fit_unit: outer_tol must be positive");

  const auto pre = panel.pre_block();
  SimplexLSProblem problem;
  problem.regressors.resize(T, N - 1);
  problem.labels.reserve(static_cast<std::size_t>(N - 1));
  std::vector<int> donors;
  donors.reserve(static_cast<std::size_t>(N - 1));
  for (int j = 0; j < N; ++j) {
    if (j == i) continue;
    problem.regressors.col(static_cast<Eigen::Index>(donors.size())) = pre.row(j).transpose();
    problem.labels.push_back(panel.unit_labels[static_cast<std::size_t>(j)]);
    donors.push_back(j);
  }
  const Eigen::VectorXd y = pre.row(i).transpose();
  const int p = covariates ? covariates->p() : 0;

  UnitFit fit;
  fit.unit = i;
  fit.weights = Eigen::VectorXd::Zero(N);

  try {
    if (p == 0) {
      problem.targets = y;
      SimplexLSSolution sol = solve_simplex_ls(problem, opts.solver);
      fit.intercept = sol.intercept;
      fit.objective = sol.objective;
      fit.kkt_gap = sol.kkt_gap;
      fit.iterations = sol.iterations;
      fit.degenerate = sol.degenerate;
      for (std::size_t c = 0; c < donors.size(); ++c) {
        fit.weights[donors[c]] = sol.weights[static_cast<Eigen::Index>(c)];
      }
      return fit;
    }

    const Eigen::MatrixXd Z = covariates->covariates[static_cast<std::size_t>(i)].topRows(T);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> zqr(Z);
    Eigen::VectorXd pi = Eigen::VectorXd::Zero(p);
    SimplexLSSolution sol;
    double prev_objective = std::numeric_limits<double>::infinity();
    const double inv_T = 1.0 / static_cast<double>(T);
    for (int outer = 0; outer < opts.max_outer; ++outer) {
      problem.targets = y - Z * pi;
      sol = solve_simplex_ls(problem, opts.solver);
      fit.iterations += sol.iterations;
      const Eigen::VectorXd partial =
          y - Eigen::VectorXd::Constant(T, sol.intercept) - problem.regressors * sol.weights;
      pi = zqr.solve(partial);
      const double objective = (partial - Z * pi).squaredNorm() * inv_T;
      if (prev_objective - objective < opts.outer_tol) {
        prev_objective = objective;
        break;
      }
      prev_objective = objective;
    }
    fit.intercept = sol.intercept;
    fit.objective = prev_objective;
    fit.kkt_gap = sol.kkt_gap;
    fit.degenerate = sol.degenerate;
    fit.covariate_coef = pi;
    for (std::size_t c = 0; c < donors.size(); ++c) {
      fit.weights[donors[c]] = sol.weights[static_cast<Eigen::Index>(c)];
    }
    return fit;
  } catch (const solver_error& e) {
    throw fit_error("unit " + panel.unit_labels[static_cast<std::size_t>(i)] +
                        ": " + e.what(),
                    i, {});
  }
}

// Fits every unit and assembles the system matrices. Fails fast on the first
// unit whose solve does not certify, reporting the units already done.
inline SCMFit fit_all(const PanelData& panel, const CovariatePanel* covariates = nullptr,
                      const SCMOptions& opts = {}) {
  const int N = panel.n_units();
  const int T = panel.T;
  const int P = panel.n_periods();
  detail::check_covariates(panel, covariates);

  SCMFit fit;
  fit.intercepts.resize(N);
  fit.weight_matrix.resize(N, N);
  fit.unit_fits.reserve(static_cast<std::size_t>(N));
  fit.has_covariates = covariates != nullptr && covariates->p() > 0;

  std::vector<int> done;
  done.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    try {
      UnitFit uf = fit_unit(panel, i, covariates, opts);
      fit.intercepts[i] = uf.intercept;
      fit.weight_matrix.row(i) = uf.weights.transpose();
      fit.unit_fits.push_back(std::move(uf));
      done.push_back(i);
    } catch (const fit_error& e) {
      throw fit_error(e.what(), i, done);
    }
  }

  fit.g_hat = Eigen::MatrixXd::Zero(P, N);
  if (fit.has_covariates) {
    for (int i = 0; i < N; ++i) {
      fit.g_hat.col(i) =
          covariates->covariates[static_cast<std::size_t>(i)] * fit.unit_fits[static_cast<std::size_t>(i)].covariate_coef;
    }
  }

  // u_t = (I - B)Y_t - a - g_t stored one pre period per row.
  const Eigen::MatrixXd ib = fit.I_minus_B();
  fit.residuals.resize(T, N);
  for (int t = 0; t < T; ++t) {
    fit.residuals.row(t) =
        (ib * panel.outcomes.col(t) - fit.intercepts - fit.g_hat.row(t).transpose()).transpose();
  }
  return fit;
}

// Spillover-blind synthetic-control estimate for unit 1 at post period t:
// the gap between the observed outcome and its synthetic counterpart.
inline double scm_gap(const SCMFit& fit, const PanelData& panel, int t) {
  if (t < panel.T || t >= panel.n_periods()) {
    throw domain_error("scm_gap: period index " + std::to_string(t) +
                       " is not a post-treatment period");
  }
  const Eigen::VectorXd y = panel.outcomes.col(t);
  return y[0] - fit.intercepts[0] - fit.weight_matrix.row(0).dot(y) - fit.g_hat(t, 0);
}

}  // namespace spillsc

#endif
