#pragma once

#include <cstdint>
#include <vector>

#include "vcpanel/estimator.hpp"
#include "vcpanel/panel.hpp"

namespace vcpanel {

// Pointwise coefficient curve for one regressor; lower/upper are empty until
// bands are attached.
struct CurveEstimate {
  int regressor = 0;
  std::vector<double> grid;
  std::vector<double> point;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.0;
};

struct VarianceDecomposition {
  std::vector<double> shares;      // per-factor share of residual variance
  std::vector<double> cumulative;  // running sum
};

// beta_j(z) on the grid for every regressor of the fit; zero rows give
// identically-zero curves.
std::vector<CurveEstimate> coefficient_curves(const FitResult& fit,
                                              const std::vector<double>& grid);

struct BootstrapOptions {
  bool unit_block = false;  // resample residual rows per unit instead of pooling
  int threads = 1;
};

// How many bootstrap refits converged (filled by bootstrap_bands).
struct BootstrapDiagnostics {
  int converged = 0;
  int total = 0;
};

// Residual bootstrap around a converged post-selection fit: residuals are
// centered and resampled i.i.d. over the pooled panel (or by unit rows with
// unit_block), the support is held fixed, and factors are re-estimated in
// each replication. Bands are pointwise percentile intervals at `level`.
// Replication b draws its stream from (seed, b), so the result is identical
// for any thread count.
std::vector<CurveEstimate> bootstrap_bands(const PanelData& data, const FitResult& post_fit,
                                           int b_reps, const std::vector<double>& grid,
                                           double level, std::uint64_t seed,
                                           const FitConfig& refit_cfg,
                                           const BootstrapOptions& opts = {},
                                           BootstrapDiagnostics* diag = nullptr);

// share_k = sum_it (gamma_ik f_tk)^2 / sum_it e_it^2 with e = y - fitted
// systematic part; cross terms vanish under the PCA normalization.
VarianceDecomposition variance_decomposition(const PanelData& data, const FitResult& fit);

}  // namespace vcpanel
