#ifndef SPILLSC_SPILLOVER_HPP
#define SPILLSC_SPILLOVER_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"
#include "spillsc/panel.hpp"
#include "spillsc/scm.hpp"

namespace spillsc {

enum class StructureKind { range, equal, distance, custom };

inline const char* to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::range: return "range";
    case StructureKind::equal: return "equal";
    case StructureKind::distance: return "distance";
    case StructureKind::custom: return "custom";
  }
  return "?";
}

// Declarative description of how treatment and spillover parameters load onto
// units. Indices are 0-based unit positions.
struct StructureSpec {
  StructureKind kind = StructureKind::range;
  std::vector<int> treated{0};
  std::vector<int> affected;     // range/equal: spillover recipients
  Eigen::VectorXd distances;     // distance: length N, treated entries unused
  Eigen::MatrixXd matrix;        // custom: N x k, used verbatim

  static StructureSpec range_based(std::vector<int> affected, std::vector<int> treated = {0}) {
    StructureSpec s;
    s.kind = StructureKind::range;
    s.treated = std::move(treated);
    s.affected = std::move(affected);
    return s;
  }
  static StructureSpec equal_hit(std::vector<int> affected, std::vector<int> treated = {0}) {
    StructureSpec s;
    s.kind = StructureKind::equal;
    s.treated = std::move(treated);
    s.affected = std::move(affected);
    return s;
  }
  static StructureSpec distance_decay(Eigen::VectorXd distances, std::vector<int> treated = {0}) {
    StructureSpec s;
    s.kind = StructureKind::distance;
    s.treated = std::move(treated);
    s.distances = std::move(distances);
    return s;
  }
  static StructureSpec custom(Eigen::MatrixXd matrix) {
    StructureSpec s;
    s.kind = StructureKind::custom;
    s.matrix = std::move(matrix);
    return s;
  }
};

// Materialized effect structure: alpha = A gamma with A of full column rank.
struct SpilloverStructure {
  StructureKind kind = StructureKind::custom;
  Eigen::MatrixXd A;  // N x k
  std::vector<int> treated;
  std::vector<int> affected;
  std::vector<std::string> warnings;

  int n_units() const { return static_cast<int>(A.rows()); }
  int k() const { return static_cast<int>(A.cols()); }
};

namespace detail {

inline double rank_tolerance(const Eigen::VectorXd& singular_values) {
  return 1e-10 * singular_values.maxCoeff();
}

inline void check_indices(const std::vector<int>& idx, int N, const char* what) {
  std::set<int> seen;
  for (int i : idx) {
    if (i < 0 || i >= N) {
      throw config_error(std::string("build_structure: ") + what + " index " + std::to_string(i) +
                         " outside 0.." + std::to_string(N - 1));
    }
    if (!seen.insert(i).second) {
      throw config_error(std::string("build_structure: duplicate ") + what + " index " +
                         std::to_string(i));
    }
  }
}

}  // namespace detail

// Builds the A matrix for a structure spec. Columns are ordered treated
// effects first, then spillover parameters. Full column rank is enforced; an
// equal-hit set covering every control is allowed but flagged, because the
// estimator's invertibility requirement is known to fail there.
inline SpilloverStructure build_structure(const StructureSpec& spec, int N) {
  if (N < 2) throw config_error("build_structure: at least 2 units required");
  detail::check_indices(spec.treated, N, "treated");
  if (spec.treated.empty() && spec.kind != StructureKind::custom) {
    throw config_error("build_structure: at least one treated unit required");
  }

  SpilloverStructure out;
  out.kind = spec.kind;
  out.treated = spec.treated;
  out.affected = spec.affected;

  switch (spec.kind) {
    case StructureKind::range: {
      detail::check_indices(spec.affected, N, "affected");
      for (int i : spec.affected) {
        for (int j : spec.treated) {
          if (i == j) {
            throw config_error("build_structure: unit " + std::to_string(i) +
                               " is both treated and affected");
          }
        }
      }
      const int k = static_cast<int>(spec.treated.size() + spec.affected.size());
      out.A = Eigen::MatrixXd::Zero(N, k);
      int col = 0;
      for (int j : spec.treated) out.A(j, col++) = 1.0;
      for (int i : spec.affected) out.A(i, col++) = 1.0;
      break;
    }
    case StructureKind::equal: {
      detail::check_indices(spec.affected, N, "affected");
      if (spec.affected.empty()) {
        throw config_error("build_structure: equal-hit needs a nonempty affected set");
      }
      for (int i : spec.affected) {
        for (int j : spec.treated) {
          if (i == j) {
            throw config_error("build_structure: unit " + std::to_string(i) +
                               " is both treated and affected");
          }
        }
      }
      const int k = static_cast<int>(spec.treated.size()) + 1;
      out.A = Eigen::MatrixXd::Zero(N, k);
      int col = 0;
      for (int j : spec.treated) out.A(j, col++) = 1.0;
      for (int i : spec.affected) out.A(i, col) = 1.0;
      if (static_cast<int>(spec.affected.size()) == N - static_cast<int>(spec.treated.size())) {
        out.warnings.push_back(
            "equal-hit structure covers every control unit; the spillover "
            "parameter is not identified (invertibility check will fail)");
      }
      break;
    }
    case StructureKind::distance: {
      if (spec.distances.size() != N) {
        throw config_error("build_structure: distance vector length " +
                           std::to_string(spec.distances.size()) + " != N = " + std::to_string(N));
      }
      if (!spec.distances.allFinite()) {
        throw config_error("build_structure: non-finite distances");
      }
      const int k = static_cast<int>(spec.treated.size()) + 1;
      out.A = Eigen::MatrixXd::Zero(N, k);
      int col = 0;
      for (int j : spec.treated) out.A(j, col++) = 1.0;
      std::set<int> treated_set(spec.treated.begin(), spec.treated.end());
      for (int i = 0; i < N; ++i) {
        if (treated_set.count(i)) continue;
        out.A(i, col) = std::exp(-spec.distances[i]);
      }
      break;
    }
    case StructureKind::custom: {
      if (spec.matrix.rows() != N) {
        throw config_error("build_structure: custom matrix has " +
                           std::to_string(spec.matrix.rows()) + " rows, panel has " +
                           std::to_string(N) + " units");
      }
      if (spec.matrix.cols() < 1) throw config_error("build_structure: custom matrix needs k >= 1");
      if (!spec.matrix.allFinite()) throw config_error("build_structure: non-finite matrix");
      out.A = spec.matrix;
      break;
    }
  }

  if (out.k() > N) {
    throw config_error("build_structure: more parameters (" + std::to_string(out.k()) +
                       ") than units (" + std::to_string(N) + ")");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.A);
  if (svd.singularValues().minCoeff() <= detail::rank_tolerance(svd.singularValues())) {
    throw config_error("build_structure: A does not have full column rank");
  }
  return out;
}

// How the estimating equation weighs the transformed residual vector.
struct Weighting {
  enum class Kind { identity, efficient, custom };
  Kind kind = Kind::identity;
  Eigen::MatrixXd W;  // used for custom; efficient computes from the fit

  static Weighting identity() { return {}; }
  static Weighting efficient() {
    Weighting w;
    w.kind = Kind::efficient;
    return w;
  }
  static Weighting custom(Eigen::MatrixXd W) {
    Weighting w;
    w.kind = Kind::custom;
    w.W = std::move(W);
    return w;
  }

  const char* name() const {
    switch (kind) {
      case Kind::identity: return "identity";
      case Kind::efficient: return "efficient";
      case Kind::custom: return "custom";
    }
    return "?";
  }
};

// Inverse of the ridge-stabilized pre-treatment residual covariance,
// Omega = R'R/T. The ridge keeps near-singular covariances usable; a truly
// singular one still fails with advice to use identity weighting.
inline Eigen::MatrixXd efficient_weight(const SCMFit& fit) {
  const int T = static_cast<int>(fit.residuals.rows());
  const int N = static_cast<int>(fit.residuals.cols());
  if (T < N + 1) {
    throw config_error("efficient_weight: needs T >= N + 1 pre-treatment periods (T = " +
                       std::to_string(T) + ", N = " + std::to_string(N) + ")");
  }
  Eigen::MatrixXd omega = fit.residuals.transpose() * fit.residuals / static_cast<double>(T);
  const double ridge = 1e-8 * omega.trace() / static_cast<double>(N);
  omega.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(omega);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw singular_error(
        "efficient_weight: residual covariance is singular even after ridge "
        "stabilization; use identity weighting");
  }
  Eigen::MatrixXd W = ldlt.solve(Eigen::MatrixXd::Identity(N, N));
  if (!W.allFinite()) {
    throw singular_error(
        "efficient_weight: residual covariance is singular even after ridge "
        "stabilization; use identity weighting");
  }
  return W;
}

namespace detail {

inline Eigen::MatrixXd resolve_weight(const Weighting& weighting, const SCMFit& fit, int N) {
  switch (weighting.kind) {
    case Weighting::Kind::identity:
      return Eigen::MatrixXd::Identity(N, N);
    case Weighting::Kind::efficient:
      return efficient_weight(fit);
    case Weighting::Kind::custom: {
      if (weighting.W.rows() != N || weighting.W.cols() != N) {
        throw config_error("weighting: custom W must be N x N");
      }
      if (!weighting.W.allFinite()) throw config_error("weighting: non-finite W");
      return weighting.W;
    }
  }
  throw config_error("weighting: unknown kind");
}

}  // namespace detail

// Identification diagnostic for a structure against a fitted system: the
// parameters are identified when A' (I-B)' W (I-B) A is well conditioned.
struct InvertibilityReport {
  double sigma_min_iba = 0.0;   // smallest singular value of (I - B) A
  double cond_iba = 0.0;        // condition number of (I - B) A
  double sigma_min_ama = 0.0;   // smallest singular value of A' M_W A
  double cond_ama = 0.0;        // condition number of A' M_W A
  double threshold = 1e8;
  bool pass = false;
};

inline InvertibilityReport check_invertibility(const SpilloverStructure& structure,
                                               const Eigen::MatrixXd& I_minus_B,
                                               const Eigen::MatrixXd& W,
                                               double threshold = 1e8) {
  const Eigen::MatrixXd iba = I_minus_B * structure.A;
  const Eigen::MatrixXd ama = iba.transpose() * W * iba;
  InvertibilityReport report;
  report.threshold = threshold;
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(iba);
    report.sigma_min_iba = svd.singularValues().minCoeff();
    report.cond_iba = report.sigma_min_iba > 0.0
                          ? svd.singularValues().maxCoeff() / report.sigma_min_iba
                          : std::numeric_limits<double>::infinity();
  }
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ama);
    report.sigma_min_ama = svd.singularValues().minCoeff();
    report.cond_ama = report.sigma_min_ama > 0.0
                          ? svd.singularValues().maxCoeff() / report.sigma_min_ama
                          : std::numeric_limits<double>::infinity();
  }
  report.pass = std::isfinite(report.cond_ama) && report.cond_ama <= threshold;
  return report;
}

inline InvertibilityReport check_invertibility(const SpilloverStructure& structure,
                                               const SCMFit& fit,
                                               const Weighting& weighting = Weighting::identity(),
                                               double threshold = 1e8) {
  const int N = fit.n_units();
  return check_invertibility(structure, fit.I_minus_B(),
                             detail::resolve_weight(weighting, fit, N), threshold);
}

// Spillover-adjusted effect estimate at one post-treatment period.
struct EffectEstimate {
  Eigen::VectorXd gamma;  // k
  Eigen::VectorXd alpha;  // N, equals A * gamma exactly
  std::string weighting;
  double foc_residual = 0.0;      // norm of the estimating-equation residual
  double condition_number = 0.0;  // of A' M_W A
  int period = -1;                // panel column index
  InvertibilityReport invertibility;
};

// gamma = (A' M_W A)^{-1} A' (I-B)' W ((I-B) Y_t - a - g_t), alpha = A gamma.
inline EffectEstimate estimate_effects(const SCMFit& fit, const PanelData& panel,
                                       const SpilloverStructure& structure,
                                       const Weighting& weighting = Weighting::identity(),
                                       int t_post = -1, double cond_threshold = 1e8) {
  const int N = fit.n_units();
  if (panel.n_units() != N) throw config_error("estimate_effects: fit/panel unit mismatch");
  if (structure.n_units() != N) throw config_error("estimate_effects: structure/panel unit mismatch");
  if (t_post < 0) t_post = panel.T;  // first post period by default
  if (t_post < panel.T || t_post >= panel.n_periods()) {
    throw domain_error("estimate_effects: period index " + std::to_string(t_post) +
                       " is not a post-treatment period");
  }

  const Eigen::MatrixXd ib = fit.I_minus_B();
  const Eigen::MatrixXd W = detail::resolve_weight(weighting, fit, N);
  InvertibilityReport report = check_invertibility(structure, ib, W, cond_threshold);
  if (!report.pass) {
    throw singular_error(
        "estimate_effects: Condition IN fails: A' M_W A condition number " +
        std::to_string(report.cond_ama) + " exceeds " + std::to_string(cond_threshold));
  }

  const Eigen::VectorXd y = panel.outcomes.col(t_post);
  const Eigen::VectorXd v = ib * y - fit.intercepts - fit.g_hat.row(t_post).transpose();
  const Eigen::MatrixXd iba = ib * structure.A;
  const Eigen::MatrixXd ama = iba.transpose() * W * iba;
  const Eigen::VectorXd rhs = iba.transpose() * (W * v);

  EffectEstimate est;
  est.gamma = ama.ldlt().solve(rhs);
  est.alpha = structure.A * est.gamma;
  est.weighting = weighting.name();
  est.period = t_post;
  est.invertibility = report;
  est.condition_number = report.cond_ama;
  est.foc_residual = (rhs - ama * est.gamma).norm();
  const double scale = 1.0 + y.norm();
  if (!(est.foc_residual <= 1e-8 * scale)) {
    throw singular_error("estimate_effects: estimating-equation residual " +
                         std::to_string(est.foc_residual) + " exceeds tolerance");
  }
  return est;
}

// One estimate per post period. A single structure is shared across periods;
// a list supplies one per period.
inline std::vector<EffectEstimate> estimate_multi_period(
    const SCMFit& fit, const PanelData& panel, const std::vector<SpilloverStructure>& structures,
    const Weighting& weighting = Weighting::identity(), double cond_threshold = 1e8) {
  const int m = panel.m;
  if (!(static_cast<int>(structures.size()) == 1 || static_cast<int>(structures.size()) == m)) {
    throw config_error("estimate_multi_period: need 1 shared structure or one per post period");
  }
  std::vector<EffectEstimate> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int s = 0; s < m; ++s) {
    const SpilloverStructure& structure =
        structures.size() == 1 ? structures.front() : structures[static_cast<std::size_t>(s)];
    try {
      out.push_back(estimate_effects(fit, panel, structure, weighting, panel.T + s, cond_threshold));
    } catch (const error& e) {
      throw singular_error("period " +
                           panel.period_labels[static_cast<std::size_t>(panel.T + s)] + ": " +
                           e.what());
    }
  }
  return out;
}

// G = A (A' M_W A)^{-1} A' (I-B)' W maps the transformed post-period vector
// (I-B)Y_t - a - g_t to the effect estimate alpha. Inference re-applies it to
// pre-treatment residuals to build null samples.
inline Eigen::MatrixXd projection_G(const SCMFit& fit, const SpilloverStructure& structure,
                                    const Weighting& weighting = Weighting::identity(),
                                    double cond_threshold = 1e8) {
  const int N = fit.n_units();
  if (structure.n_units() != N) throw config_error("projection_G: structure/fit unit mismatch");
  const Eigen::MatrixXd ib = fit.I_minus_B();
  const Eigen::MatrixXd W = detail::resolve_weight(weighting, fit, N);
  InvertibilityReport report = check_invertibility(structure, ib, W, cond_threshold);
  if (!report.pass) {
    throw singular_error("projection_G: Condition IN fails: A' M_W A condition number " +
                         std::to_string(report.cond_ama) + " exceeds " +
                         std::to_string(cond_threshold));
  }
  const Eigen::MatrixXd iba = ib * structure.A;
  const Eigen::MatrixXd ama = iba.transpose() * W * iba;
  return structure.A * ama.ldlt().solve(iba.transpose() * W);
}

}  // namespace spillsc

#endif
