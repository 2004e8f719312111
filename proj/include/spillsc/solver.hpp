#ifndef SPILLSC_SOLVER_HPP
#define SPILLSC_SOLVER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"

namespace spillsc {

// Least squares of a target series on donor series with a free intercept and
// weights constrained to the probability simplex:
//
//   min over (a, w)  (1/T) * sum_t (y_t - a - x_t'w)^2,   w >= 0, sum_j w_j = 1.
//
// The free intercept makes the problem equivalent to the same regression on
// demeaned series, with a recovered afterwards as mean(y) - w'mean(x).
struct SimplexLSProblem {
  Eigen::MatrixXd regressors;       // T x q, one column per donor
  Eigen::VectorXd targets;          // T
  std::vector<std::string> labels;  // optional donor labels, size q when present
};

struct SimplexLSOptions {
  double tol = 1e-9;      // KKT-gap certificate threshold
  int max_iter = 100000;  // projected-gradient iteration cap
};

struct SimplexLSSolution {
  Eigen::VectorXd weights;  // q, on the simplex
  double intercept = 0.0;
  double objective = 0.0;  // mean squared residual at the solution
  double kkt_gap = 0.0;
  int iterations = 0;
  bool degenerate = false;  // all-zero demeaned donors; weights fell back to uniform
};

// Euclidean projection onto {w : w >= 0, sum w = 1} by sort-and-threshold.
// Exact in the sense that inactive coordinates come back as literal zeros.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index q = v.size();
  if (q == 0) throw domain_error("project_simplex: empty vector");
  std::vector<double> u(v.data(), v.data() + q);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double theta = 0.0;
  int rho = 0;
  for (Eigen::Index j = 0; j < q; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) {
      theta = candidate;
      rho = static_cast<int>(j + 1);
    }
  }
  if (rho == 0) {
    // All coordinates tie below the threshold only through rounding; fall
    // back to the uniform point, the projection of any constant vector.
    return Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
  }
  return v.unaryExpr([theta](double x) { return std::max(x - theta, 0.0); });
}

namespace detail {

// Stationarity violation for min f(w) on the simplex given g = grad f(w):
// active coordinates must share a common multiplier, inactive ones must sit
// at or above it. The multiplier is estimated as the weight-averaged gradient,
// which equals the common value exactly at an optimum since sum w = 1.
inline double simplex_kkt_gap(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                              double active_tol = 1e-10) {
  const double mu = w.dot(g);
  double gap = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > active_tol) {
      gap = std::max(gap, std::abs(g[i] - mu));
    } else {
      gap = std::max(gap, std::max(0.0, mu - g[i]));
    }
  }
  return gap;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
// deterministic start. Relative tolerance 1e-6 on the Rayleigh quotient.
inline double power_iteration_lmax(const Eigen::MatrixXd& S) {
  const Eigen::Index q = S.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Constant(q, 1.0 / std::sqrt(static_cast<double>(q)));
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd Sv = S * v;
    const double norm = Sv.norm();
    if (!(norm > 0.0)) return 0.0;
    v = Sv / norm;
    const double next = v.dot(S * v);
    if (std::abs(next - lambda) <= 1e-6 * std::max(std::abs(next), 1.0e-300)) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

// Projected-gradient solve of the demeaned problem with Nesterov momentum and
// gradient restart. Deterministic: fixed start (uniform weights), fixed
// iteration order, no randomized restarts. Convergence is declared only when
// the KKT gap at the current feasible iterate falls at or below opts.tol;
// hitting max_iter raises solver_error carrying the last iterate.
inline SimplexLSSolution solve_simplex_ls(const SimplexLSProblem& problem,
                                          const SimplexLSOptions& opts = {}) {
  const Eigen::Index T = problem.regressors.rows();
  const Eigen::Index q = problem.regressors.cols();
  if (q < 1) throw config_error("solve_simplex_ls: at least one donor required");
  if (T < 1) throw config_error("solve_simplex_ls: at least one period required");
  if (problem.targets.size() != T) {
    throw config_error("solve_simplex_ls: targets/regressors row mismatch");
  }
  if (!problem.targets.allFinite() || !problem.regressors.allFinite()) {
    throw config_error("solve_simplex_ls: non-finite input");
  }
  if (!(opts.tol > 0.0)) throw config_error("solve_simplex_ls: tol must be positive");
  if (opts.max_iter < 1) throw config_error("solve_simplex_ls: max_iter must be >= 1");

  const Eigen::RowVectorXd donor_means = problem.regressors.colwise().mean();
  const double target_mean = problem.targets.mean();
  const Eigen::MatrixXd Xd = problem.regressors.rowwise() - donor_means;
  const Eigen::VectorXd yd = problem.targets.array() - target_mean;

  // Objective in mean-squared form: f(w) = w'Gw - 2 c'w + y0, grad = 2(Gw - c).
  const double inv_T = 1.0 / static_cast<double>(T);
  const Eigen::MatrixXd G = (Xd.transpose() * Xd) * inv_T;
  const Eigen::VectorXd c = (Xd.transpose() * yd) * inv_T;
  const double y0 = yd.squaredNorm() * inv_T;

  SimplexLSSolution sol;
  const double lmax = detail::power_iteration_lmax(G);
  if (!(lmax > 0.0)) {
    // Degenerate: every demeaned donor is identically zero, so the gradient
    // is constant and any simplex point is optimal. Report uniform weights.
    sol.weights = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
    sol.degenerate = true;
    sol.intercept = target_mean - sol.weights.dot(donor_means.transpose());
    sol.objective = y0;
    sol.kkt_gap = 0.0;
    sol.iterations = 0;
    return sol;
  }
  const double step = 1.0 / (2.0 * lmax * (1.0 + 1e-4));

  Eigen::VectorXd x = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
  Eigen::VectorXd grad = 2.0 * (G * x - c);
  double gap = detail::simplex_kkt_gap(x, grad);
  int iterations = 0;

  if (gap > opts.tol) {
    Eigen::VectorXd x_prev = x;
    double t_mom = 1.0;
    bool converged = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
      const double beta = (t_mom - 1.0) / t_next;
      const Eigen::VectorXd y = x + beta * (x - x_prev);
      const Eigen::VectorXd grad_y = 2.0 * (G * y - c);
      Eigen::VectorXd x_next = project_simplex(y - step * grad_y);
      // Gradient restart: drop momentum when it points against descent.
      if ((y - x_next).dot(x_next - x) > 0.0) {
        t_mom = 1.0;
      } else {
        t_mom = t_next;
      }
      x_prev = x;
      x = std::move(x_next);
      grad = 2.0 * (G * x - c);
      gap = detail::simplex_kkt_gap(x, grad);
      iterations = it;
      if (gap <= opts.tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw solver_error(
          "solve_simplex_ls: no KKT certificate within max_iter (gap " +
              std::to_string(gap) + ", tol " + std::to_string(opts.tol) + ")",
          std::vector<double>(x.data(), x.data() + x.size()), gap, iterations);
    }
  }

  sol.weights = x;
  sol.kkt_gap = gap;
  sol.iterations = iterations;
  sol.intercept = target_mean - x.dot(donor_means.transpose());
  // Residual form avoids the cancellation the expanded quadratic suffers
  // near perfect fits.
  sol.objective = (yd - Xd * x).squaredNorm() * inv_T;
  return sol;
}

// KKT stationarity violation of a proposed solution for a problem; 0 at an
// exact optimum. Recomputes the demeaned gradient from the problem data.
inline double verify_kkt(const SimplexLSProblem& problem, const Eigen::VectorXd& weights) {
  const Eigen::Index T = problem.regressors.rows();
  const Eigen::Index q = problem.regressors.cols();
  if (weights.size() != q) throw config_error("verify_kkt: weight length mismatch");
  const Eigen::RowVectorXd donor_means = problem.regressors.colwise().mean();
  const Eigen::MatrixXd Xd = problem.regressors.rowwise() - donor_means;
  const Eigen::VectorXd yd = problem.targets.array() - problem.targets.mean();
  const double inv_T = 1.0 / static_cast<double>(T);
  const Eigen::VectorXd grad = 2.0 * inv_T * (Xd.transpose() * (Xd * weights - yd));
  return detail::simplex_kkt_gap(weights, grad);
}

inline double verify_kkt(const SimplexLSProblem& problem, const SimplexLSSolution& solution) {
  return verify_kkt(problem, solution.weights);
}

}  // namespace spillsc

#endif
