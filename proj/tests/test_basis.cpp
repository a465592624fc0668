#include "doctest.h"

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "vcpanel/basis.hpp"

using namespace vcpanel;

namespace {

// Gram matrix of the first m Hermite functions under a Gauss-Hermite rule;
// h_j h_k carries the e^{-x^2} factor the rule expects, and the remaining
// polynomial has degree <= 2(m-1), so 200 nodes integrate it exactly.
Eigen::MatrixXd quadrature_gram(int m, int nodes) {
  oracles::QuadRule rule = oracles::gauss_hermite(nodes);
  Eigen::MatrixXd h(nodes, m);
  for (int q = 0; q < nodes; ++q) h.row(q) = hermite_basis(rule.nodes[q], m).transpose();
  return h.transpose() * rule.weights.asDiagonal() * h;
}

}  // namespace

TEST_CASE("hermite_basis closed-form values at zero") {
  Eigen::VectorXd h1 = hermite_basis(0.0, 1);
  REQUIRE(h1.size() == 1);
  CHECK(h1[0] == doctest::Approx(0.75112554446494248).epsilon(1e-14));  // pi^{-1/4}

  Eigen::VectorXd h2 = hermite_basis(0.0, 2);
  CHECK(h2[0] == doctest::Approx(0.75112554446494248).epsilon(1e-14));
  CHECK(h2[1] == 0.0);  // odd function
}

TEST_CASE("hermite_basis rejects bad input") {
  CHECK_THROWS(hermite_basis(0.0, 0));
  CHECK_THROWS(hermite_basis(std::nan(""), 3));
  CHECK_THROWS(hermite_basis(std::numeric_limits<double>::infinity(), 3));
}

TEST_CASE("quadrature Gram is the identity") {
  Eigen::MatrixXd g6 = quadrature_gram(6, 200);
  CHECK((g6 - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::MatrixXd g20 = quadrature_gram(20, 200);
  CHECK((g20 - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("recurrence matches the factorial closed form") {
  for (double z = -5.0; z <= 5.0; z += 0.25) {
    Eigen::VectorXd h = hermite_basis(z, 12);
    for (int j = 0; j < 12; ++j) {
      CHECK(std::abs(h[j] - oracles::naive_hermite_fn(j, z)) < 1e-10);
    }
  }
}

TEST_CASE("eval_coef_fn") {
  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(5);
  CHECK(eval_coef_fn(zeros, 1.3) == 0.0);

  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(4);
  e0[0] = 1.0;
  CHECK(eval_coef_fn(e0, 0.0) == doctest::Approx(0.75112554446494248).epsilon(1e-14));
}

TEST_CASE("projection of the bump curve recovers its value at zero") {
  // Least-squares projection over the working range [-1, 2] of the index
  // variable; the m = 12 partial sum reproduces g(0) = 1.4.
  auto g = [](double z) { return std::exp(-0.5 * z * z) + 0.4; };
  Eigen::VectorXd c = oracles::project_on_basis(g, 12, -1.0, 2.0);
  CHECK(std::abs(eval_coef_fn(c, 0.0) - 1.4) < 1e-3);
}

TEST_CASE("design_row layout and length") {
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  const double z = 0.7;
  Eigen::VectorXd h = hermite_basis(z, 2);
  Eigen::VectorXd row = design_row(x, z, 2);
  REQUIRE(row.size() == 4);
  CHECK(row[0] == h[0]);
  CHECK(row[1] == 0.0);
  CHECK(row[2] == h[1]);
  CHECK(row[3] == 0.0);

  Eigen::VectorXd x5 = Eigen::VectorXd::Ones(5);
  CHECK(design_row(x5, 0.0, 4).size() == 20);
}

TEST_CASE("design_row contraction identity") {
  // design_row(x, z, m) . vec(C) == x' C H_m(z) with column-major vec
  std::mt19937 eng(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int p = 3, m = 4;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd x(p);
    for (int k = 0; k < p; ++k) x[k] = normal(eng);
    const double z = normal(eng);
    Eigen::MatrixXd c(p, m);
    for (int k = 0; k < p; ++k) {
      for (int j = 0; j < m; ++j) c(k, j) = normal(eng);
    }
    Eigen::Map<const Eigen::VectorXd> vec_c(c.data(), p * m);
    const double lhs = design_row(x, z, m).dot(vec_c);
    const double rhs = x.dot(c * hermite_basis(z, m));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
  }
}

TEST_CASE("sieve truncation rule") {
  CHECK(SieveConfig::rule_m(40, 40) == 4);
  CHECK(SieveConfig::rule_m(80, 80) == 5);
  CHECK(SieveConfig::rule_m(120, 120) == 5);
  CHECK(SieveConfig::rule_m(2, 2) >= 1);  // rule stays valid at the smallest panel

  SieveConfig cfg;
  CHECK(cfg.resolve(40, 40) == 4);
  cfg.m = 7;
  CHECK(cfg.resolve(40, 40) == 7);
}
