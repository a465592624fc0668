#include "vcpanel/basis.hpp"

#include <cmath>
#include <stdexcept>

namespace vcpanel {

int SieveConfig::rule_m(int n_units, int n_periods) {
  double nt = static_cast<double>(n_units) * static_cast<double>(n_periods);
  return static_cast<int>(std::floor(1.2 * std::pow(nt, 1.0 / 6.0)));
}

int SieveConfig::resolve(int n_units, int n_periods) const {
  int out = m >= 1 ? m : rule_m(n_units, n_periods);
  if (out < 1) throw std::invalid_argument("sieve truncation m must be >= 1");
  return out;
}

void hermite_basis_into(double z, int m, double* out) {
  if (m < 1) throw std::invalid_argument("hermite_basis: m must be >= 1");
  if (!std::isfinite(z)) throw std::invalid_argument("hermite_basis: z must be finite");
  // pi^{-1/4}
  static const double kH0 = 0.75112554446494248;
  out[0] = kH0 * std::exp(-0.5 * z * z);
  if (m == 1) return;
  out[1] = std::sqrt(2.0) * z * out[0];
  for (int j = 1; j + 1 < m; ++j) {
    out[j + 1] = z * std::sqrt(2.0 / (j + 1)) * out[j] - std::sqrt(j / (j + 1.0)) * out[j - 1];
  }
}

Eigen::VectorXd hermite_basis(double z, int m) {
  Eigen::VectorXd h(m);
  hermite_basis_into(z, m, h.data());
  return h;
}

double eval_coef_fn(const Eigen::Ref<const Eigen::VectorXd>& c_row, double z) {
  const int m = static_cast<int>(c_row.size());
  Eigen::VectorXd h = hermite_basis(z, m);
  return c_row.dot(h);
}

Eigen::VectorXd design_row(const Eigen::Ref<const Eigen::VectorXd>& x, double z, int m) {
  const int p = static_cast<int>(x.size());
  if (p < 1) throw std::invalid_argument("design_row: need at least one regressor");
  Eigen::VectorXd h = hermite_basis(z, m);
  Eigen::VectorXd row(static_cast<Eigen::Index>(m) * p);
  for (int j = 0; j < m; ++j) row.segment(static_cast<Eigen::Index>(j) * p, p) = h[j] * x;
  return row;
}

}  // namespace vcpanel
