#ifndef SPILLSC_PANEL_HPP
#define SPILLSC_PANEL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spillsc/errors.hpp"

namespace spillsc {

// Balanced outcome panel: N units observed over T pre-treatment periods and
// m post-treatment periods. Unit 1 (row 0) is the treated unit by convention.
// Weight fitting must never touch post-treatment columns; estimators read the
// pre block through pre_block() and post periods through period_column().
struct PanelData {
  Eigen::MatrixXd outcomes;                // N x (T + m)
  std::vector<std::string> unit_labels;    // N
  std::vector<std::string> period_labels;  // T + m
  int T = 0;
  int m = 0;

  int n_units() const { return static_cast<int>(outcomes.rows()); }
  int n_periods() const { return static_cast<int>(outcomes.cols()); }

  Eigen::Ref<const Eigen::MatrixXd> pre_block() const {
    return outcomes.leftCols(T);
  }

  // Column t for 0 <= t < T + m; post-treatment periods are t >= T.
  Eigen::VectorXd period_column(int t) const {
    if (t < 0 || t >= n_periods()) {
      throw domain_error("period_column: index " + std::to_string(t) + " outside 0.." +
                         std::to_string(n_periods() - 1));
    }
    return outcomes.col(t);
  }
};

// Per-unit covariate series: covariates[i] is (T + m) x p for unit i. All
// units share the same p; p = 0 disables the covariate path entirely.
struct CovariatePanel {
  std::vector<Eigen::MatrixXd> covariates;
  int p() const {
    return covariates.empty() ? 0 : static_cast<int>(covariates.front().cols());
  }
};

// Checks CovariatePanel extents against the panel it annotates.
inline CovariatePanel make_covariates(std::vector<Eigen::MatrixXd> covariates, int n_units,
                                      int n_periods) {
  if (static_cast<int>(covariates.size()) != n_units) {
    throw config_error("covariates: one series per unit required (" +
                       std::to_string(covariates.size()) + " given, " + std::to_string(n_units) +
                       " units)");
  }
  const int p = static_cast<int>(covariates.front().cols());
  for (int i = 0; i < n_units; ++i) {
    const auto& z = covariates[static_cast<std::size_t>(i)];
    if (static_cast<int>(z.rows()) != n_periods || static_cast<int>(z.cols()) != p) {
      throw config_error("covariates: unit " + std::to_string(i + 1) + " series is " +
                         std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                         ", expected " + std::to_string(n_periods) + "x" + std::to_string(p));
    }
    if (!z.allFinite()) {
      throw config_error("covariates: unit " + std::to_string(i + 1) +
                         " series contains non-finite values");
    }
  }
  CovariatePanel out;
  out.covariates = std::move(covariates);
  return out;
}

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(end[-1]))) --end;
  if (begin == end) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

// Validates shape and labeling invariants shared by every construction path.
inline PanelData make_panel(Eigen::MatrixXd outcomes, std::vector<std::string> unit_labels,
                            std::vector<std::string> period_labels, int T, int m) {
  const int N = static_cast<int>(outcomes.rows());
  const int P = static_cast<int>(outcomes.cols());
  if (N < 3) throw config_error("panel: at least 3 units required, got " + std::to_string(N));
  if (T < 2) throw config_error("panel: at least 2 pre-treatment periods required");
  if (m < 1) throw config_error("panel: at least 1 post-treatment period required");
  if (P != T + m) {
    throw config_error("panel: outcome columns (" + std::to_string(P) + ") != T + m (" +
                       std::to_string(T + m) + ")");
  }
  if (static_cast<int>(unit_labels.size()) != N) throw config_error("panel: unit label count mismatch");
  if (static_cast<int>(period_labels.size()) != P) throw config_error("panel: period label count mismatch");
  if (!outcomes.allFinite()) throw config_error("panel: outcomes contain non-finite values");
  {
    std::set<std::string> seen;
    for (const auto& l : unit_labels) {
      if (!seen.insert(l).second) throw config_error("panel: duplicate unit label '" + l + "'");
    }
  }
  {
    std::set<std::string> seen;
    for (const auto& l : period_labels) {
      if (!seen.insert(l).second) throw config_error("panel: duplicate period label '" + l + "'");
    }
  }
  // Chronology check when every period label is numeric.
  {
    std::vector<double> numeric;
    numeric.reserve(period_labels.size());
    bool all_numeric = true;
    for (const auto& l : period_labels) {
      auto v = detail::parse_number(l);
      if (!v) {
        all_numeric = false;
        break;
      }
      numeric.push_back(*v);
    }
    if (all_numeric) {
      for (std::size_t i = 1; i < numeric.size(); ++i) {
        if (!(numeric[i] > numeric[i - 1])) {
          throw config_error("panel: period labels must be strictly increasing ('" +
                             period_labels[i - 1] + "' then '" + period_labels[i] + "')");
        }
      }
    }
  }
  PanelData panel;
  panel.outcomes = std::move(outcomes);
  panel.unit_labels = std::move(unit_labels);
  panel.period_labels = std::move(period_labels);
  panel.T = T;
  panel.m = m;
  return panel;
}

struct PanelLoadResult {
  PanelData panel;
  int ignored_columns = 0;  // trailing periods beyond T + m dropped from the file
};

// Wide CSV: header "unit,<period>,<period>,..."; one row per unit. The
// treatment period is the first post-treatment column; post_periods columns
// from it (inclusive) are kept, later columns are ignored with a count.
inline PanelLoadResult load_panel_csv(const std::string& path, const std::string& treatment_period,
                                      int post_periods) {
  if (post_periods < 1) throw config_error("load_panel_csv: post_periods must be >= 1");
  std::ifstream in(path);
  if (!in) throw parse_error("load_panel_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw parse_error("load_panel_csv: empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 3) throw parse_error("load_panel_csv: header needs a unit column and periods");
  std::vector<std::string> periods;
  for (std::size_t i = 1; i < header.size(); ++i) periods.push_back(detail::trim(header[i]));

  int treat_idx = -1;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    if (periods[i] == detail::trim(treatment_period)) {
      treat_idx = static_cast<int>(i);
      break;
    }
  }
  if (treat_idx < 0) {
    throw config_error("load_panel_csv: treatment period '" + treatment_period +
                       "' not found among period columns");
  }
  if (treat_idx == 0) {
    throw config_error("load_panel_csv: no pre-treatment periods before '" + treatment_period + "'");
  }
  const int T = treat_idx;
  const int available_post = static_cast<int>(periods.size()) - treat_idx;
  if (available_post < post_periods) {
    throw config_error("load_panel_csv: " + std::to_string(post_periods) +
                       " post periods requested but only " + std::to_string(available_post) +
                       " present after '" + treatment_period + "'");
  }
  const int keep = T + post_periods;
  const int ignored = static_cast<int>(periods.size()) - keep;

  std::vector<std::string> unit_labels;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw parse_error("load_panel_csv: line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    const std::string unit = detail::trim(fields[0]);
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(keep));
    for (int j = 0; j < keep; ++j) {
      auto v = detail::parse_number(fields[static_cast<std::size_t>(j + 1)]);
      if (!v) {
        throw parse_error("load_panel_csv: missing or non-numeric value (unit " + unit +
                          ", period " + periods[static_cast<std::size_t>(j)] + ")");
      }
      row.push_back(*v);
    }
    unit_labels.push_back(unit);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw parse_error("load_panel_csv: no unit rows in '" + path + "'");

  Eigen::MatrixXd outcomes(static_cast<Eigen::Index>(rows.size()), keep);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < keep; ++j) outcomes(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  periods.resize(static_cast<std::size_t>(keep));
  PanelLoadResult result;
  result.panel = make_panel(std::move(outcomes), std::move(unit_labels), std::move(periods), T,
                            post_periods);
  result.ignored_columns = ignored;
  return result;
}

// Writes the same wide format with round-trip precision.
inline void save_panel_csv(const PanelData& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("save_panel_csv: cannot open '" + path + "' for writing");
  out << "unit";
  for (const auto& p : panel.period_labels) out << ',' << p;
  out << '\n';
  for (int i = 0; i < panel.n_units(); ++i) {
    out << panel.unit_labels[static_cast<std::size_t>(i)];
    for (int t = 0; t < panel.n_periods(); ++t) {
      out << ',' << detail::format_double(panel.outcomes(i, t));
    }
    out << '\n';
  }
  if (!out) throw config_error("save_panel_csv: write to '" + path + "' failed");
}

struct PanelDiagnostic {
  enum class Kind { zero_variance, near_duplicate, short_panel };
  Kind kind;
  std::string message;
};

// Pre-treatment data quality checks. Diagnostics are advisory: they flag
// configurations where downstream solves will be degenerate or unstable.
inline std::vector<PanelDiagnostic> validate_panel(const PanelData& panel) {
  std::vector<PanelDiagnostic> out;
  const auto pre = panel.pre_block();
  const int N = panel.n_units();
  const double inv_T = 1.0 / static_cast<double>(panel.T);
  Eigen::VectorXd means(N), sds(N);
  Eigen::MatrixXd centered(N, panel.T);
  for (int i = 0; i < N; ++i) {
    means[i] = pre.row(i).mean();
    centered.row(i) = pre.row(i).array() - means[i];
    sds[i] = std::sqrt(centered.row(i).squaredNorm() * inv_T);
  }
  for (int i = 0; i < N; ++i) {
    if (sds[i] == 0.0) {
      out.push_back({PanelDiagnostic::Kind::zero_variance,
                     "unit " + panel.unit_labels[static_cast<std::size_t>(i)] +
                         " has zero pre-treatment variance"});
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      if (sds[i] == 0.0 || sds[j] == 0.0) continue;
      const double corr =
          centered.row(i).dot(centered.row(j)) * inv_T / (sds[i] * sds[j]);
      if (corr > 0.9999) {
        out.push_back({PanelDiagnostic::Kind::near_duplicate,
                       "units " + panel.unit_labels[static_cast<std::size_t>(i)] + " and " +
                           panel.unit_labels[static_cast<std::size_t>(j)] +
                           " are nearly duplicate in the pre period (corr " +
                           detail::format_double(corr) + ")"});
      }
    }
  }
  if (panel.T < N) {
    out.push_back({PanelDiagnostic::Kind::short_panel,
                   "fewer pre-treatment periods (" + std::to_string(panel.T) + ") than units (" +
                       std::to_string(N) + "); weight fits may be unstable"});
  }
  return out;
}

}  // namespace spillsc

#endif
