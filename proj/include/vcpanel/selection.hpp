#pragma once

#include <Eigen/Core>
#include <set>
#include <utility>
#include <vector>

#include "vcpanel/estimator.hpp"
#include "vcpanel/panel.hpp"

namespace vcpanel {

// BIC penalty regime: LD uses ln(N)/N^(1/4), HD uses ln(xi)/xi^(1/8) with
// xi = min(N,T).
enum class Regime { LD, HD };

struct PathOptions {
  int grid_size = 40;
  double lo_factor = 1e-4;
  double hi_factor = 1e1;
};

// Adaptive penalty path: lambda = nu * weights with weights the reciprocal
// row norms of the unpenalized pilot fit.
struct LambdaPath {
  Eigen::VectorXd weights;
  std::vector<double> nu_grid;
  Regime regime = Regime::LD;
};

struct BicRecord {
  double nu = 0.0;
  double rss_norm = 0.0;  // RSS/(NT) at the path fit
  int df = 0;
  double bic = 0.0;
  bool converged = false;
};

struct SelectionResult {
  double best_nu = 0.0;
  Eigen::VectorXd best_lambda;
  std::set<int> selected;
  std::vector<BicRecord> bic_table;
  FitResult fit;       // path fit at best_nu
  FitResult post_fit;  // unpenalized refit on the selected support
  int support_violations = 0;  // adjacent grid pairs where df increased
};

// Pilot estimator: the fit with lambda = 0.
CoefficientMatrix unpenalized_baseline(const PanelData& data, const SieveConfig& sieve, int r,
                                       const FitConfig& cfg);

// weights_j = 1 / max(||pilot row j||, zero_floor); nu grid log-spaced on
// [lo_factor, hi_factor] * s with s = NT * sigma~^2 / sum_j weights_j and
// sigma~^2 the pilot's normalized RSS.
LambdaPath build_lambda_path(const FitResult& baseline, int n_units, int n_periods,
                             Regime regime, double zero_floor, const PathOptions& opts = {});

double bic_value(double rss_norm, int df, int n_units, Regime regime, int xi);

// Number of rows with Euclidean norm above threshold.
int count_df(const CoefficientMatrix& coef, double threshold);
double default_df_threshold(const CoefficientMatrix& coef);

// Walks the nu grid in ascending order with warm starts (multistart at the
// first point only), scores each fit by BIC and refits the winner's support
// without penalty. Ties in BIC resolve to the smaller nu.
SelectionResult select_lambda(const PanelData& data, const SieveConfig& sieve, int r,
                              const LambdaPath& path, const FitConfig& cfg);
SelectionResult select_lambda(const PanelData& data, const SieveDesign& design, int r,
                              const LambdaPath& path, const FitConfig& cfg);

struct PicRecord {
  int r = 0;
  double sigma2 = 0.0;
  double pic = 0.0;
  int selected_count = 0;
};

double pic_value(double sigma2, int n_units, int n_periods, int r);

struct PipelineConfig {
  SieveConfig sieve;
  FitConfig fit;
  Regime regime = Regime::LD;
  PathOptions path;
};

// Full tuning pipeline at a fixed factor count: pilot fit, path construction,
// BIC selection, post-selection refit.
struct PipelineResult {
  int m = 0;
  FitResult baseline;
  LambdaPath path;
  SelectionResult selection;
};
PipelineResult run_selection_pipeline(const PanelData& data, int r, const PipelineConfig& cfg);
PipelineResult run_selection_pipeline(const PanelData& data, const SieveDesign& design, int r,
                                      const PipelineConfig& cfg);

// Runs the pipeline for r = 1..r_max and picks the PIC minimizer, with
// sigma^2 the mean squared idiosyncratic residual of the post-selection fit.
// Ties resolve to the smaller r. Per-r pipelines are independent and run on
// `threads` threads.
std::pair<int, std::vector<PicRecord>> select_num_factors(const PanelData& data, int r_max,
                                                          const PipelineConfig& cfg,
                                                          int threads = 1);

}  // namespace vcpanel
