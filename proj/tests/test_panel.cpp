#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "vcpanel/panel.hpp"

using namespace vcpanel;

namespace {

std::string temp_path(const char* name) {
  return std::string("/tmp/vcpanel_test_") + name + "_" + std::to_string(::getpid()) + ".csv";
}

PanelData tiny_panel() {
  Eigen::MatrixXd y(2, 3), z(2, 3);
  y << 1, 2, 3, 4, 5, 6;
  z << 0.1, 0.2, 0.3, -0.1, -0.2, -0.3;
  std::vector<Eigen::MatrixXd> x(2, Eigen::MatrixXd(3, 1));
  x[0] << 1.5, 2.5, 3.5;
  x[1] << -1.5, -2.5, -3.5;
  return PanelData(y, x, z, {"u1", "u2"}, {"t1", "t2", "t3"}, {"x1"});
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("panel construction and validation") {
  PanelData p = tiny_panel();
  CHECK(p.n_units() == 2);
  CHECK(p.n_periods() == 3);
  CHECK(p.n_regressors() == 1);

  // N = 1 rejected
  Eigen::MatrixXd y(1, 3), z(1, 3);
  y.setZero();
  z.setZero();
  std::vector<Eigen::MatrixXd> x(1, Eigen::MatrixXd::Zero(3, 1));
  CHECK_THROWS(PanelData(y, x, z, {"u1"}, {"a", "b", "c"}, {"x1"}));

  // NaN rejected deterministically
  Eigen::MatrixXd y2(2, 2), z2(2, 2);
  y2 << 1, 2, 3, std::nan("");
  z2.setZero();
  std::vector<Eigen::MatrixXd> x2(2, Eigen::MatrixXd::Zero(2, 1));
  CHECK_THROWS(PanelData(y2, x2, z2, {"u1", "u2"}, {"a", "b"}, {"x1"}));
}

TEST_CASE("csv loading") {
  const std::string path = temp_path("load");
  write_lines(path, {
                        "# comment line",
                        "unit,period,y,z,g1",
                        "u1,t1,1.0,0.1,2.0",
                        "u1,t2,1.5,0.2,2.5",
                        "u1,t3,2.0,0.3,3.0",
                        "u2,t1,-1.0,-0.1,-2.0",
                        "u2,t2,-1.5,-0.2,-2.5",
                        "u2,t3,-2.0,-0.3,-3.0",
                    });
  PanelData p = load_panel_csv(path);
  CHECK(p.n_units() == 2);
  CHECK(p.n_periods() == 3);
  CHECK(p.n_regressors() == 1);
  CHECK(p.y()(0, 0) == 1.0);
  CHECK(p.x(1)(2, 0) == -3.0);
  CHECK(p.unit_ids()[0] == "u1");
  std::remove(path.c_str());
}

TEST_CASE("csv errors name the offending cell") {
  const std::string path = temp_path("err");

  SUBCASE("missing cell") {
    write_lines(path, {
                          "unit,period,y,z,g1",
                          "u1,t1,1,0.1,2",
                          "u1,t2,1,0.2,2",
                          "u1,t3,1,0.3,2",
                          "u2,t1,1,0.1,2",
                          "u2,t2,1,0.2,2",
                      });
    CHECK_THROWS_WITH_AS(load_panel_csv(path),
                         doctest::Contains("missing (u2, t3)"), std::runtime_error);
  }

  SUBCASE("duplicate cell") {
    write_lines(path, {
                          "unit,period,y,z,g1",
                          "u1,t1,1,0.1,2",
                          "u1,t1,1,0.1,2",
                      });
    CHECK_THROWS_WITH_AS(load_panel_csv(path), doctest::Contains("duplicate"),
                         std::runtime_error);
  }

  SUBCASE("non-numeric field reports the row") {
    write_lines(path, {
                          "unit,period,y,z,g1",
                          "u1,t1,1,0.1,2",
                          "u1,t2,abc,0.2,2",
                      });
    CHECK_THROWS_WITH_AS(load_panel_csv(path), doctest::Contains("row 3"), std::runtime_error);
  }

  SUBCASE("nan field rejected") {
    write_lines(path, {
                          "unit,period,y,z,g1",
                          "u1,t1,1,0.1,nan",
                      });
    CHECK_THROWS_AS(load_panel_csv(path), std::runtime_error);
  }

  std::remove(path.c_str());
}

TEST_CASE("numeric period labels sort numerically") {
  const std::string path = temp_path("periods");
  write_lines(path, {
                        "unit,period,y,z,g1",
                        "u1,10,1,0.1,2",
                        "u1,2,1,0.2,2",
                        "u2,10,1,0.1,2",
                        "u2,2,1,0.2,2",
                    });
  PanelData p = load_panel_csv(path);
  CHECK(p.period_ids()[0] == "2");
  CHECK(p.period_ids()[1] == "10");
  std::remove(path.c_str());
}

TEST_CASE("write/load round trip is the identity") {
  std::mt19937 eng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 4, t = 5, p = 3;
  Eigen::MatrixXd y(n, t), z(n, t);
  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, p));
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) {
      y(i, tt) = normal(eng);
      z(i, tt) = normal(eng);
      for (int j = 0; j < p; ++j) x[i](tt, j) = normal(eng);
    }
  }
  std::vector<std::string> units = {"aa", "bb", "cc", "dd"};
  std::vector<std::string> periods = {"1", "2", "3", "4", "5"};
  std::vector<std::string> names = {"x1", "x2", "x3"};
  PanelData orig(y, x, z, units, periods, names);

  const std::string path = temp_path("roundtrip");
  write_panel_csv(orig, path);
  PanelData back = load_panel_csv(path);
  std::remove(path.c_str());

  REQUIRE(back.n_units() == n);
  REQUIRE(back.n_periods() == t);
  REQUIRE(back.n_regressors() == p);
  CHECK(back.unit_ids() == units);
  CHECK(back.period_ids() == periods);
  CHECK((back.y() - orig.y()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.z() - orig.z()).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < n; ++i) {
    CHECK((back.x(i) - orig.x(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("writer rejects a bad path") {
  CHECK_THROWS(write_panel_csv(tiny_panel(), ""));
  CHECK_THROWS(write_panel_csv(tiny_panel(), "/nonexistent_dir_xyz/file.csv"));
}

TEST_CASE("regressor restriction keeps order and names") {
  Eigen::MatrixXd y(2, 2), z(2, 2);
  y.setZero();
  z.setZero();
  std::vector<Eigen::MatrixXd> x(2, Eigen::MatrixXd(2, 3));
  x[0] << 1, 2, 3, 4, 5, 6;
  x[1] << 7, 8, 9, 10, 11, 12;
  PanelData p(y, x, z, {"u1", "u2"}, {"a", "b"}, {"x1", "x2", "x3"});
  PanelData sub = p.restrict_regressors({0, 2});
  CHECK(sub.n_regressors() == 2);
  CHECK(sub.regressor_names()[1] == "x3");
  CHECK(sub.x(0)(0, 1) == 3);
  CHECK_THROWS(p.restrict_regressors({}));
  CHECK_THROWS(p.restrict_regressors({5}));
}
