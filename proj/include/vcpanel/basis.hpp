#pragma once

#include <Eigen/Core>

namespace vcpanel {

// Truncation count for the sieve expansion of the coefficient functions.
// m = 0 means "apply the rule", which is floor(1.2 * (N*T)^(1/6)).
struct SieveConfig {
  int m = 0;

  static int rule_m(int n_units, int n_periods);
  int resolve(int n_units, int n_periods) const;
};

// First m orthonormal Hermite functions h_0..h_{m-1} at z, where
// h_j(z) = (2^j j! sqrt(pi))^{-1/2} H_j(z) exp(-z^2/2) with H_j the
// physicists' Hermite polynomial. Evaluated by the normalized three-term
// recurrence h_{j+1} = z*sqrt(2/(j+1))*h_j - sqrt(j/(j+1))*h_{j-1}, which
// keeps every intermediate O(1) for any m.
Eigen::VectorXd hermite_basis(double z, int m);

// Allocation-free variant for hot loops; out must hold m doubles.
void hermite_basis_into(double z, int m, double* out);

// beta(z) = c_row . H_m(z) for one coefficient function.
double eval_coef_fn(const Eigen::Ref<const Eigen::VectorXd>& c_row, double z);

// Tensor design row H_m(z) (x) x, length m*p; block j holds h_j(z)*x.
// With vec(C) the column-major stacking of the p x m coefficient matrix,
// design_row(x, z, m) . vec(C) == x' C H_m(z).
Eigen::VectorXd design_row(const Eigen::Ref<const Eigen::VectorXd>& x, double z, int m);

}  // namespace vcpanel
