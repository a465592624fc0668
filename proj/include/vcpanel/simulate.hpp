#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "vcpanel/panel.hpp"
#include "vcpanel/selection.hpp"

namespace vcpanel {

enum class DgpCase { LD, HD };

// Simulation design. The case fixes (p, p*): LD has p = 5 with 2 relevant
// regressors; HD has p = 30 with p* = 2*floor(1.2*(NT)^(1/6)) relevant ones.
struct DgpConfig {
  int n_units = 40;
  int n_periods = 40;
  DgpCase dgp_case = DgpCase::LD;
  int r_true = 3;
  double ar_coef = 0.5;
  double loading_mean = 0.5;
  double innovation_cross_corr = 0.5;  // Toeplitz base of the innovation covariance
  int burn_in = 200;
  std::uint64_t seed = 0;

  int p() const { return dgp_case == DgpCase::LD ? 5 : 30; }
  int p_star() const;
  void validate() const;
};

enum class BetaShape { Bump, Wave, Zero };  // exp(-z^2/2)+0.4, z*exp(-z^2/2)+0.7, 0

struct SimTruth {
  std::set<int> true_support;       // 0-based, always {0..p*-1}
  std::vector<BetaShape> beta_fn;   // per regressor
  Eigen::MatrixXd f0;               // T x r
  Eigen::MatrixXd gamma0;           // N x r
  Eigen::MatrixXd eps;              // N x T (after any noise scaling)
};

// True coefficient function of regressor `index` (0-based). Inside the
// support, even indices (1st, 3rd, ... regressor) carry the bump curve and
// odd indices the wave curve; outside it is identically zero.
double true_beta(int index, double z, const DgpConfig& cfg);

// AR(1) path with i.i.d. standard-normal innovations, burn-in discarded.
// Returns dim x length.
Eigen::MatrixXd ar1_series(std::mt19937_64& eng, double coef, int burn_in, int length, int dim);

// Same with cross-correlated innovations L * xi, L a lower Cholesky factor.
Eigen::MatrixXd ar1_series_correlated(std::mt19937_64& eng, double coef, int burn_in, int length,
                                      const Eigen::MatrixXd& chol_lower);

// Draws one panel from the design. noise_scale multiplies the idiosyncratic
// error only (0 gives the noiseless debug panel).
std::pair<PanelData, SimTruth> generate(const DgpConfig& cfg, double noise_scale = 1.0);

// 63 evenly spaced points on [-1, 2].
std::vector<double> default_z_grid();

struct McConfig {
  SieveConfig sieve;                 // m = 0 applies the size rule
  FitConfig fit;
  PathOptions path;
  std::optional<Regime> regime;      // default: LD case -> LD, HD case -> HD
  bool select_r = false;             // per-replication PIC instead of the true r
  int r_max = 6;
  std::vector<double> grid = default_z_grid();
  double noise_scale = 1.0;
  int threads = 1;
};

struct McCurve {
  int regressor = 0;
  std::vector<double> mean;
  std::vector<double> lo;   // 2.5 percentile across replications
  std::vector<double> hi;   // 97.5 percentile
};

struct McReport {
  int reps = 0;
  int p = 0;
  int p_star = 0;
  long missed_true = 0;
  long false_positives = 0;
  double fnr_pct = 0.0;
  double fpr_pct = 0.0;
  int nonconverged = 0;           // replications whose chosen fit did not converge
  int support_violation_reps = 0; // replications with df increases along the path
  std::vector<double> grid;
  std::vector<McCurve> curves;    // regressors selected in at least one replication
  std::vector<int> selected_r;    // per replication, only when select_r
};

// Full Monte Carlo harness: generate -> tune -> post-selection refit ->
// curves, replication k seeded with seed + k. Bit-identical output for any
// thread count.
McReport monte_carlo(const DgpConfig& cfg, int reps, const McConfig& mc);

}  // namespace vcpanel
