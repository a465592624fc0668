#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "vcpanel/basis.hpp"
#include "vcpanel/panel.hpp"

namespace fixtures {

struct SievePanel {
  vcpanel::PanelData panel;
  Eigen::MatrixXd c0;      // p x m
  Eigen::MatrixXd f0;      // T x r, F'F/T = I
  Eigen::MatrixXd gamma0;  // N x r
};

// Panel whose response lies exactly in the sieve span: y_i = Z_i vec(C0)
// (+ F0 gamma_i when r > 0) (+ noise_sd * N(0,1)).
inline SievePanel make_sieve_panel(int n, int t, int p, int m, int r, unsigned seed,
                                   double noise_sd = 0.0) {
  std::mt19937 eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd c0(p, m);
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < m; ++k) c0(j, k) = normal(eng);
  }
  Eigen::MatrixXd f0(t, r), gamma0(n, r);
  for (int i = 0; i < t; ++i) {
    for (int k = 0; k < r; ++k) f0(i, k) = normal(eng);
  }
  if (r > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(f0);
    f0 = std::sqrt(static_cast<double>(t)) *
         (qr.householderQ() * Eigen::MatrixXd::Identity(t, r));
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) gamma0(i, k) = normal(eng);
  }

  Eigen::MatrixXd y(n, t), z(n, t);
  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, p));
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) {
      z(i, tt) = normal(eng);
      for (int j = 0; j < p; ++j) x[i](tt, j) = normal(eng);
      Eigen::VectorXd beta = c0 * vcpanel::hermite_basis(z(i, tt), m);
      double v = x[i].row(tt).dot(beta);
      if (r > 0) v += f0.row(tt).dot(gamma0.row(i));
      if (noise_sd > 0.0) v += noise_sd * normal(eng);
      y(i, tt) = v;
    }
  }
  std::vector<std::string> units(n), periods(t), names(p);
  for (int i = 0; i < n; ++i) units[i] = "u" + std::to_string(i + 1);
  for (int tt = 0; tt < t; ++tt) periods[tt] = std::to_string(tt + 1);
  for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  return {vcpanel::PanelData(std::move(y), std::move(x), std::move(z), units, periods, names),
          std::move(c0), std::move(f0), std::move(gamma0)};
}

}  // namespace fixtures
