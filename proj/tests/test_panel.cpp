#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "spillsc/errors.hpp"
#include "spillsc/panel.hpp"

using namespace spillsc;

namespace {

std::filesystem::path temp_csv(const std::string& stem) {
  return std::filesystem::temp_directory_path() / (stem + ".csv");
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

PanelData small_panel() {
  Eigen::MatrixXd y(3, 4);
  y << 1.0, 2.0, 3.0, 4.0,
       2.0, 2.5, 3.5, 4.5,
       0.5, 1.5, 2.0, 3.0;
  return make_panel(y, {"u1", "u2", "u3"}, {"1", "2", "3", "4"}, 3, 1);
}

}  // namespace

TEST_CASE("wide csv with treatment at the last period loads as T=3, m=1") {
  auto path = temp_csv("panel_small");
  write_file(path,
             "unit,1,2,3,4\n"
             "a,1.0,2.0,3.0,4.0\n"
             "b,2.0,2.5,3.5,4.5\n"
             "c,0.5,1.5,2.0,3.0\n");
  auto res = load_panel_csv(path.string(), "4", 1);
  REQUIRE(res.panel.n_units() == 3);
  REQUIRE(res.panel.T == 3);
  REQUIRE(res.panel.m == 1);
  REQUIRE(res.ignored_columns == 0);
  REQUIRE(res.panel.unit_labels == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(res.panel.outcomes(1, 2) == 3.5);
  REQUIRE(res.panel.period_column(3)(2) == 3.0);
  std::filesystem::remove(path);
}

TEST_CASE("blank cell raises a parse error naming the unit and period") {
  auto path = temp_csv("panel_blank");
  write_file(path,
             "unit,1,2,3,4\n"
             "a,1.0,2.0,3.0,4.0\n"
             "b,2.0,2.5,,4.5\n"
             "c,0.5,1.5,2.0,3.0\n");
  try {
    load_panel_csv(path.string(), "4", 1);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("unit b") != std::string::npos);
    REQUIRE(msg.find("period 3") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("38-unit 31-period panel with 1989 treatment splits into T=19, m=12") {
  std::string content = "state";
  for (int year = 1970; year <= 2000; ++year) content += "," + std::to_string(year);
  content += "\n";
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> dist(40.0, 140.0);
  for (int i = 1; i <= 38; ++i) {
    content += "s" + std::to_string(i);
    for (int year = 1970; year <= 2000; ++year) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.6f", dist(eng));
      content += buf;
    }
    content += "\n";
  }
  auto path = temp_csv("panel_states");
  write_file(path, content);
  auto res = load_panel_csv(path.string(), "1989", 12);
  REQUIRE(res.panel.n_units() == 38);
  REQUIRE(res.panel.T == 19);
  REQUIRE(res.panel.m == 12);
  REQUIRE(res.panel.n_periods() == 31);
  REQUIRE(res.ignored_columns == 0);
  REQUIRE(res.panel.period_labels.front() == "1970");
  REQUIRE(res.panel.period_labels[19] == "1989");
  std::filesystem::remove(path);
}

TEST_CASE("columns after the requested post window are ignored with a count") {
  auto path = temp_csv("panel_extra");
  write_file(path,
             "unit,1,2,3,4,5,6\n"
             "a,1,2,3,4,5,6\n"
             "b,2,3,4,5,6,7\n"
             "c,3,4,5,6,7,8\n");
  auto res = load_panel_csv(path.string(), "3", 2);
  REQUIRE(res.panel.T == 2);
  REQUIRE(res.panel.m == 2);
  REQUIRE(res.ignored_columns == 2);
  REQUIRE(res.panel.period_labels == std::vector<std::string>{"1", "2", "3", "4"});
  std::filesystem::remove(path);
}

TEST_CASE("treatment period errors are configuration errors") {
  auto path = temp_csv("panel_treat");
  write_file(path,
             "unit,1,2,3\n"
             "a,1,2,3\n"
             "b,2,3,4\n"
             "c,3,4,5\n");
  REQUIRE_THROWS_AS(load_panel_csv(path.string(), "9", 1), config_error);
  REQUIRE_THROWS_AS(load_panel_csv(path.string(), "1", 1), config_error);   // no pre periods
  REQUIRE_THROWS_AS(load_panel_csv(path.string(), "3", 2), config_error);   // only 1 post column
  REQUIRE_THROWS_AS(load_panel_csv(path.string(), "3", 0), config_error);
  std::filesystem::remove(path);
  REQUIRE_THROWS_AS(load_panel_csv("/nonexistent/panel.csv", "3", 1), parse_error);
}

TEST_CASE("ragged rows raise a parse error with the line number") {
  auto path = temp_csv("panel_ragged");
  write_file(path,
             "unit,1,2,3\n"
             "a,1,2,3\n"
             "b,2,3\n");
  try {
    load_panel_csv(path.string(), "3", 1);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("crlf line endings and padded fields are tolerated") {
  auto path = temp_csv("panel_crlf");
  write_file(path,
             "unit,1,2,3\r\n"
             "a, 1.5 ,2,3\r\n"
             "b,2,3,4\r\n"
             "c,3,4,5\r\n");
  auto res = load_panel_csv(path.string(), "3", 1);
  REQUIRE(res.panel.outcomes(0, 0) == 1.5);
  REQUIRE(res.panel.T == 2);
  std::filesystem::remove(path);
}

TEST_CASE("save and reload reproduce outcomes bit-exactly") {
  std::mt19937_64 eng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd y(4, 6);
  for (int i = 0; i < 4; ++i)
    for (int t = 0; t < 6; ++t) y(i, t) = noise(eng) * std::pow(10.0, (i * 6 + t) % 7 - 3);
  y(0, 0) = 1.0 / 3.0;
  y(1, 1) = -0.1;
  y(2, 2) = 12345678.987654321;
  y(3, 3) = 5e-300;
  auto panel = make_panel(y, {"w", "x", "yy", "z"}, {"10", "20", "30", "40", "50", "60"}, 4, 2);
  auto path = temp_csv("panel_roundtrip");
  save_panel_csv(panel, path.string());
  auto res = load_panel_csv(path.string(), "50", 2);
  REQUIRE(res.panel.T == 4);
  REQUIRE(res.panel.m == 2);
  REQUIRE(res.panel.unit_labels == panel.unit_labels);
  REQUIRE(res.panel.period_labels == panel.period_labels);
  for (int i = 0; i < 4; ++i)
    for (int t = 0; t < 6; ++t) REQUIRE(res.panel.outcomes(i, t) == panel.outcomes(i, t));
  std::filesystem::remove(path);
}

TEST_CASE("construction enforces shape and label invariants") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Ones(3, 4);
  std::vector<std::string> units{"a", "b", "c"};
  std::vector<std::string> periods{"1", "2", "3", "4"};
  REQUIRE_NOTHROW(make_panel(y, units, periods, 3, 1));
  REQUIRE_THROWS_AS(make_panel(y.topRows(2), {"a", "b"}, periods, 3, 1), config_error);
  REQUIRE_THROWS_AS(make_panel(y, units, periods, 1, 3), config_error);
  REQUIRE_THROWS_AS(make_panel(y, units, periods, 4, 0), config_error);
  REQUIRE_THROWS_AS(make_panel(y, units, periods, 2, 1), config_error);  // T+m != columns
  REQUIRE_THROWS_AS(make_panel(y, {"a", "a", "c"}, periods, 3, 1), config_error);
  REQUIRE_THROWS_AS(make_panel(y, units, {"1", "2", "2", "4"}, 3, 1), config_error);
  REQUIRE_THROWS_AS(make_panel(y, units, {"1", "3", "2", "4"}, 3, 1), config_error);
  Eigen::MatrixXd bad = y;
  bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(make_panel(bad, units, periods, 3, 1), config_error);
  // Non-numeric period labels skip the chronology check but still require uniqueness.
  REQUIRE_NOTHROW(make_panel(y, units, {"q1", "q2", "q3", "q4"}, 3, 1));
}

TEST_CASE("pre and post addressing are separated") {
  auto panel = small_panel();
  auto pre = panel.pre_block();
  REQUIRE(pre.cols() == 3);
  REQUIRE(pre.rows() == 3);
  REQUIRE(pre(0, 2) == 3.0);
  REQUIRE(panel.period_column(3)(0) == 4.0);  // first post period
  REQUIRE_THROWS_AS(panel.period_column(4), domain_error);
  REQUIRE_THROWS_AS(panel.period_column(-1), domain_error);
}

TEST_CASE("validate_panel flags constant units") {
  Eigen::MatrixXd y(3, 4);
  y << 1.0, 2.0, 3.0, 4.0,
       7.0, 7.0, 7.0, 9.0,   // constant over the pre window only
       0.5, 1.5, 2.0, 3.0;
  auto panel = make_panel(y, {"a", "b", "c"}, {"1", "2", "3", "4"}, 3, 1);
  auto diags = validate_panel(panel);
  bool found = false;
  for (const auto& d : diags) {
    if (d.kind == PanelDiagnostic::Kind::zero_variance) {
      found = true;
      REQUIRE(d.message.find("unit b") != std::string::npos);
    }
  }
  REQUIRE(found);
}

TEST_CASE("validate_panel flags near-duplicate units") {
  Eigen::MatrixXd y(3, 4);
  y << 1.0, 2.0, 3.0, 4.0,
       5.0, 6.5, 7.0, 9.0,
       1.0, 2.0, 3.0, 8.0;  // identical to unit a over the pre window
  auto panel = make_panel(y, {"a", "b", "c"}, {"1", "2", "3", "4"}, 3, 1);
  auto diags = validate_panel(panel);
  bool found = false;
  for (const auto& d : diags) {
    if (d.kind == PanelDiagnostic::Kind::near_duplicate) {
      found = true;
      REQUIRE(d.message.find("a") != std::string::npos);
      REQUIRE(d.message.find("c") != std::string::npos);
    }
  }
  REQUIRE(found);
}

TEST_CASE("validate_panel flags short panels and passes well-conditioned noise") {
  std::mt19937_64 eng(7);
  std::normal_distribution<double> noise(0.0, 1.0);
  {
    Eigen::MatrixXd y(5, 4);
    for (int i = 0; i < 5; ++i)
      for (int t = 0; t < 4; ++t) y(i, t) = noise(eng);
    auto panel = make_panel(y, {"a", "b", "c", "d", "e"}, {"1", "2", "3", "4"}, 3, 1);
    auto diags = validate_panel(panel);
    bool found = false;
    for (const auto& d : diags) found = found || d.kind == PanelDiagnostic::Kind::short_panel;
    REQUIRE(found);
  }
  {
    Eigen::MatrixXd y(10, 51);
    for (int i = 0; i < 10; ++i)
      for (int t = 0; t < 51; ++t) y(i, t) = noise(eng);
    std::vector<std::string> units, periods;
    for (int i = 1; i <= 10; ++i) units.push_back("u" + std::to_string(i));
    for (int t = 1; t <= 51; ++t) periods.push_back(std::to_string(t));
    auto panel = make_panel(y, units, periods, 50, 1);
    REQUIRE(validate_panel(panel).empty());
  }
}

TEST_CASE("covariate panels must match the outcome extents") {
  std::vector<Eigen::MatrixXd> z(3, Eigen::MatrixXd::Zero(4, 2));
  REQUIRE_NOTHROW(make_covariates(z, 3, 4));
  REQUIRE_THROWS_AS(make_covariates(z, 4, 4), config_error);
  REQUIRE_THROWS_AS(make_covariates(z, 3, 5), config_error);
  auto bad = z;
  bad[1](2, 1) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(make_covariates(bad, 3, 4), config_error);
  auto ragged = z;
  ragged[2] = Eigen::MatrixXd::Zero(4, 3);
  REQUIRE_THROWS_AS(make_covariates(ragged, 3, 4), config_error);
}
