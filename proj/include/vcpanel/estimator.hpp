#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <set>
#include <vector>

#include "vcpanel/basis.hpp"
#include "vcpanel/panel.hpp"

namespace vcpanel {

// p x m sieve coefficient matrix; row j holds the expansion of beta_j.
// Rows listed in zero_rows are frozen at exactly zero by the group-penalty
// update and stay zero for the rest of a fit.
struct CoefficientMatrix {
  Eigen::MatrixXd c;
  std::set<int> zero_rows;

  int n_rows() const { return static_cast<int>(c.rows()); }
  int n_basis() const { return static_cast<int>(c.cols()); }
  double row_norm(int j) const { return c.row(j).norm(); }
  static CoefficientMatrix zero(int p, int m);
};

// Estimated factors F (T x r, F'F/T = I_r, columns in descending eigenvalue
// order) and loadings (N x r). r = 0 encodes "no factor structure".
struct FactorEstimate {
  Eigen::MatrixXd f;
  Eigen::MatrixXd gamma;
  Eigen::VectorXd eigenvalues;

  int r() const { return static_cast<int>(f.cols()); }
};

struct FitConfig {
  double tol = 1e-6;
  int max_iter = 500;
  int n_starts = 3;
  std::uint64_t seed = 0;
  double zero_floor = 1e-8;
};

struct FitResult {
  CoefficientMatrix coef;
  FactorEstimate factors;
  double rss = 0.0;        // sum_i ||M_F (Y_i - phi_i)||^2, unnormalized
  double objective = 0.0;  // rss + sum_j lambda_j ||C_j||
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

// Explicit starting point for a warm-started fit (lambda-path continuation).
struct FitStart {
  CoefficientMatrix coef;
  Eigen::MatrixXd f;
};

// Design quantities that depend only on (panel, m): per-unit tensor design
// blocks Z_i, their pooled Gram and response cross-products. Shared across
// every fit on the same data, including the whole lambda path.
class SieveDesign {
 public:
  SieveDesign(const PanelData& data, int m);

  int n_units() const { return static_cast<int>(z_.size()); }
  int n_periods() const { return t_; }
  int n_regressors() const { return p_; }
  int m() const { return m_; }

  const Eigen::MatrixXd& design(int unit) const { return z_[unit]; }  // T x m*p
  const Eigen::MatrixXd& gram0() const { return gram0_; }             // sum Z_i' Z_i
  const Eigen::VectorXd& zy0() const { return zy0_; }                 // sum Z_i' Y_i
  const Eigen::MatrixXd& y() const { return y_; }                     // N x T

 private:
  int t_, p_, m_;
  std::vector<Eigen::MatrixXd> z_;
  Eigen::MatrixXd gram0_;
  Eigen::VectorXd zy0_;
  Eigen::MatrixXd y_;
};

// Fitted systematic part x_it' beta(z_it) as an N x T matrix.
Eigen::MatrixXd sieve_fitted(const SieveDesign& design, const CoefficientMatrix& coef);

// M_F v = v - F (F'v) / T, valid because F'F/T = I_r. Never forms the T x T
// projector. Throws if the normalization is violated beyond 1e-6.
Eigen::VectorXd residual_projector_apply(const Eigen::MatrixXd& f,
                                         const Eigen::Ref<const Eigen::VectorXd>& v);

// One group-penalty coefficient update: solves
//   (sum_i Z_i' M_F Z_i + D/2) vec(C) = sum_i Z_i' M_F Y_i
// with D = I_m (x) diag(lambda_j / ||c_prev row j||). Rows already frozen, or
// with previous norm below zero_floor*sqrt(m) while penalized, are dropped
// from the system and returned as exact zeros.
CoefficientMatrix update_coefficients(const PanelData& data, const Eigen::MatrixXd& f,
                                      const Eigen::VectorXd& lambda,
                                      const CoefficientMatrix& c_prev, double zero_floor);

// PCA factor update from the residuals W_i = Y_i - phi_i[beta]: top-r
// eigenvectors of S = (1/NT) sum_i W_i W_i', scaled by sqrt(T); loadings
// gamma_i = F' W_i / T. Column signs fixed so each column's
// largest-magnitude entry is positive.
FactorEstimate update_factors(const PanelData& data, const CoefficientMatrix& coef, int r);

// Penalized objective of the estimation problem, unnormalized.
double objective_value(const PanelData& data, const CoefficientMatrix& coef,
                       const Eigen::MatrixXd& f, const Eigen::VectorXd& lambda);

// Alternating minimization: coefficient update given F, PCA factor update
// given the coefficients, until the relative change of C drops below tol.
// Runs cfg.n_starts random starts (F0 ~ N(0,1) entries, orthonormalized) and
// keeps the lowest final objective; a warm start replaces the random starts.
FitResult fit(const SieveDesign& design, int r, const Eigen::VectorXd& lambda,
              const FitConfig& cfg, const FitStart* warm = nullptr);
FitResult fit(const PanelData& data, const SieveConfig& sieve, int r,
              const Eigen::VectorXd& lambda, const FitConfig& cfg);

// Unpenalized refit on a regressor subset, re-embedded into the full p x m
// shape with zero rows elsewhere.
FitResult post_selection_fit(const PanelData& data, const SieveConfig& sieve,
                             const std::set<int>& selected, int r, const FitConfig& cfg);

}  // namespace vcpanel
