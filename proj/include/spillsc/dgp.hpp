#ifndef SPILLSC_DGP_HPP
#define SPILLSC_DGP_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"
#include "spillsc/panel.hpp"
#include "spillsc/rng.hpp"

namespace spillsc {

// How the common factor's lagged term is read: its own level (AR) or the
// previous innovation (MA). Every statistic downstream is invariant to the
// common factor because fitted weights sum to one, so the choice is cosmetic.
enum class EtaRecursion { ar, ma };

// Stationary three-factor model plus a common factor. Outcomes are
// y_{i,t} = eta_t + lambda_t' mu_i + noise_sd * eps_{i,t} with mu_i drawn
// U[0,1]^3 once per loading_seed and held fixed across replications.
struct StationaryFactorConfig {
  int n_units = 10;
  int n_pre = 50;
  int n_post = 1;
  double eta_drift = 1.0;
  double eta_ar = 0.5;
  EtaRecursion eta_recursion = EtaRecursion::ar;
  double lambda1_ar = 0.5;
  double lambda2_drift = 1.0;
  double lambda2_ma = 0.5;
  double lambda3_ar = 0.5;
  double lambda3_ma = 0.5;
  double factor_sd = 1.0;  // scale of every nu innovation
  double noise_sd = 1.0;   // scale of eps
  int burn_in = 500;
  std::uint64_t loading_seed = 1;
};

// Two independent random-walk factors plus one stationary AR factor, no
// common factor. Units 1..4 carry fixed loadings (1,0,0),(0,1,0),(1,0,0),
// (0,1,0) so units 1/3 and 2/4 are pairwise cointegrated; later units get
// U[0,1]^3 loadings normalized to sum one.
struct CointegratedFactorConfig {
  int n_units = 10;
  int n_pre = 50;
  int n_post = 1;
  double rw1_scale = 0.5;
  double rw2_scale = 0.5;
  double lambda3_ar = 0.5;
  double factor_sd = 1.0;
  double noise_sd = 1.0;
  int burn_in = 500;
  std::uint64_t loading_seed = 1;
};

// Additive effect vector applied to every post-treatment period.
struct EffectPattern {
  Eigen::VectorXd alpha;
  std::string name;

  static EffectPattern none(int n_units) {
    return {Eigen::VectorXd::Zero(n_units), "none"};
  }
  // Unit 1 treated; the first floor((N-1)/3) control units receive spillover.
  static EffectPattern concentrated(int n_units, double treatment = 5.0, double spill = 3.0) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n_units);
    a[0] = treatment;
    const int hit = (n_units - 1) / 3;
    for (int i = 1; i <= hit; ++i) a[i] = spill;
    return {a, "concentrated"};
  }
  // Unit 1 treated; the first floor(2(N-1)/3) control units receive spillover.
  static EffectPattern spreadout(int n_units, double treatment = 5.0, double spill = 3.0) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n_units);
    a[0] = treatment;
    const int hit = 2 * (n_units - 1) / 3;
    for (int i = 1; i <= hit; ++i) a[i] = spill;
    return {a, "spreadout"};
  }
  static EffectPattern custom(Eigen::VectorXd a) { return {std::move(a), "custom"}; }
};

namespace detail {

inline void check_stationary(const StationaryFactorConfig& c) {
  if (c.n_units < 3) throw config_error("dgp: at least 3 units");
  if (c.n_pre < 2 || c.n_post < 1) throw config_error("dgp: n_pre >= 2 and n_post >= 1 required");
  if (std::abs(c.eta_ar) >= 1.0 || std::abs(c.lambda1_ar) >= 1.0 || std::abs(c.lambda3_ar) >= 1.0) {
    throw config_error("dgp: AR coefficients must satisfy |phi| < 1");
  }
  if (c.factor_sd < 0.0 || c.noise_sd < 0.0) throw config_error("dgp: negative innovation scale");
  if (c.burn_in < 0) throw config_error("dgp: negative burn_in");
}

inline void check_cointegrated(const CointegratedFactorConfig& c) {
  if (c.n_units < 5) throw config_error("dgp: cointegrated design needs at least 5 units");
  if (c.n_pre < 2 || c.n_post < 1) throw config_error("dgp: n_pre >= 2 and n_post >= 1 required");
  if (std::abs(c.lambda3_ar) >= 1.0) throw config_error("dgp: AR coefficient must satisfy |phi| < 1");
  if (c.factor_sd < 0.0 || c.noise_sd < 0.0) throw config_error("dgp: negative innovation scale");
  if (c.burn_in < 0) throw config_error("dgp: negative burn_in");
}

inline std::vector<std::string> default_unit_labels(int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) out.push_back("u" + std::to_string(i));
  return out;
}

inline std::vector<std::string> default_period_labels(int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int t = 1; t <= n; ++t) out.push_back(std::to_string(t));
  return out;
}

}  // namespace detail

// Loadings are a pure function of (config dims, loading_seed): unit-major,
// factor-minor draw order.
inline Eigen::MatrixXd stationary_loadings(const StationaryFactorConfig& config) {
  detail::check_stationary(config);
  rng_engine eng(config.loading_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd mu(config.n_units, 3);
  for (int i = 0; i < config.n_units; ++i) {
    for (int f = 0; f < 3; ++f) mu(i, f) = unif(eng);
  }
  return mu;
}

inline Eigen::MatrixXd cointegrated_loadings(const CointegratedFactorConfig& config) {
  detail::check_cointegrated(config);
  rng_engine eng(config.loading_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(config.n_units, 3);
  mu(0, 0) = 1.0;
  mu(1, 1) = 1.0;
  mu(2, 0) = 1.0;
  mu(3, 1) = 1.0;
  for (int i = 4; i < config.n_units; ++i) {
    double row[3];
    double sum = 0.0;
    for (double& v : row) {
      v = unif(eng);
      sum += v;
    }
    // U[0,1] entries are almost surely nonzero in sum; guard the measure-zero case.
    if (sum <= 0.0) {
      mu.row(i).setConstant(1.0 / 3.0);
    } else {
      for (int f = 0; f < 3; ++f) mu(i, f) = row[f] / sum;
    }
  }
  return mu;
}

// Untreated outcomes from the stationary factor model. Per-period draw order
// is nu0, nu1, nu2, nu3, then eps_1..eps_N; burn-in periods draw no eps, so
// the burned-in factor state is identical across unit counts for a seed.
inline PanelData simulate_stationary(const StationaryFactorConfig& config, std::uint64_t rng_seed) {
  detail::check_stationary(config);
  const int N = config.n_units;
  const int P = config.n_pre + config.n_post;
  const Eigen::MatrixXd mu = stationary_loadings(config);

  rng_engine eng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double eta = 0.0, lambda1 = 0.0, lambda3 = 0.0;
  double nu0_prev = 0.0, nu2_prev = 0.0, nu3_prev = 0.0;
  Eigen::MatrixXd outcomes(N, P);

  const int total = config.burn_in + P;
  for (int t = 0; t < total; ++t) {
    const double nu0 = config.factor_sd * gauss(eng);
    const double nu1 = config.factor_sd * gauss(eng);
    const double nu2 = config.factor_sd * gauss(eng);
    const double nu3 = config.factor_sd * gauss(eng);
    eta = config.eta_drift +
          (config.eta_recursion == EtaRecursion::ar ? config.eta_ar * eta
                                                    : config.eta_ar * nu0_prev) +
          nu0;
    lambda1 = config.lambda1_ar * lambda1 + nu1;
    const double lambda2 = config.lambda2_drift + nu2 + config.lambda2_ma * nu2_prev;
    lambda3 = config.lambda3_ar * lambda3 + nu3 + config.lambda3_ma * nu3_prev;
    nu0_prev = nu0;
    nu2_prev = nu2;
    nu3_prev = nu3;
    if (t < config.burn_in) continue;
    const int col = t - config.burn_in;
    for (int i = 0; i < N; ++i) {
      const double common = eta + lambda1 * mu(i, 0) + lambda2 * mu(i, 1) + lambda3 * mu(i, 2);
      outcomes(i, col) = common + config.noise_sd * gauss(eng);
    }
  }
  return make_panel(std::move(outcomes), detail::default_unit_labels(N),
                    detail::default_period_labels(P), config.n_pre, config.n_post);
}

// Untreated outcomes from the cointegrated model. Random walks start at zero
// at the first sampled period's predecessor; only the stationary factor is
// burned in (drawing nu3 alone), then sampled periods draw nu1, nu2, nu3,
// eps_1..eps_N.
inline PanelData simulate_cointegrated(const CointegratedFactorConfig& config,
                                       std::uint64_t rng_seed) {
  detail::check_cointegrated(config);
  const int N = config.n_units;
  const int P = config.n_pre + config.n_post;
  const Eigen::MatrixXd mu = cointegrated_loadings(config);

  rng_engine eng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double lambda3 = 0.0;
  for (int t = 0; t < config.burn_in; ++t) {
    lambda3 = config.lambda3_ar * lambda3 + config.factor_sd * gauss(eng);
  }

  double lambda1 = 0.0, lambda2 = 0.0;
  Eigen::MatrixXd outcomes(N, P);
  for (int t = 0; t < P; ++t) {
    lambda1 += config.rw1_scale * config.factor_sd * gauss(eng);
    lambda2 += config.rw2_scale * config.factor_sd * gauss(eng);
    lambda3 = config.lambda3_ar * lambda3 + config.factor_sd * gauss(eng);
    for (int i = 0; i < N; ++i) {
      const double common = lambda1 * mu(i, 0) + lambda2 * mu(i, 1) + lambda3 * mu(i, 2);
      outcomes(i, t) = common + config.noise_sd * gauss(eng);
    }
  }
  return make_panel(std::move(outcomes), detail::default_unit_labels(N),
                    detail::default_period_labels(P), config.n_pre, config.n_post);
}

// Adds the effect vector to every post-treatment column; pre-treatment
// columns and labels are untouched.
inline PanelData apply_effects(const PanelData& panel, const EffectPattern& pattern) {
  if (pattern.alpha.size() != panel.n_units()) {
    throw config_error("apply_effects: pattern length " + std::to_string(pattern.alpha.size()) +
                       " != unit count " + std::to_string(panel.n_units()));
  }
  if (!pattern.alpha.allFinite()) throw config_error("apply_effects: non-finite effect");
  PanelData out = panel;
  for (int t = panel.T; t < panel.n_periods(); ++t) out.outcomes.col(t) += pattern.alpha;
  return out;
}

}  // namespace spillsc

#endif
