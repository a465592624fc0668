#include "vcpanel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vcpanel/basis.hpp"
#include "vcpanel/parallel.hpp"
#include "vcpanel/rng.hpp"

namespace vcpanel {

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("curve grid is empty");
  for (size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) {
      throw std::invalid_argument("curve grid must be strictly increasing");
    }
  }
}

// Type-7 percentile (linear interpolation between order statistics).
double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<CurveEstimate> coefficient_curves(const FitResult& fit,
                                              const std::vector<double>& grid) {
  check_grid(grid);
  const int p = fit.coef.n_rows();
  std::vector<CurveEstimate> out(p);
  for (int j = 0; j < p; ++j) {
    out[j].regressor = j;
    out[j].grid = grid;
    out[j].point.resize(grid.size());
    for (size_t k = 0; k < grid.size(); ++k) {
      out[j].point[k] = eval_coef_fn(fit.coef.c.row(j), grid[k]);
    }
  }
  return out;
}

std::vector<CurveEstimate> bootstrap_bands(const PanelData& data, const FitResult& post_fit,
                                           int b_reps, const std::vector<double>& grid,
                                           double level, std::uint64_t seed,
                                           const FitConfig& refit_cfg,
                                           const BootstrapOptions& opts,
                                           BootstrapDiagnostics* diag) {
  if (b_reps < 1) throw std::invalid_argument("bootstrap: need at least one replication");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap: level must be in (0,1)");
  if (!post_fit.converged) throw std::invalid_argument("bootstrap: fit did not converge");
  check_grid(grid);

  const int n = data.n_units();
  const int t = data.n_periods();
  const int p = data.n_regressors();
  const int m = post_fit.coef.n_basis();
  const int r = post_fit.factors.r();
  const int g_len = static_cast<int>(grid.size());

  std::set<int> support;
  for (int j = 0; j < p; ++j) {
    if (!post_fit.coef.zero_rows.count(j)) support.insert(j);
  }
  if (support.empty()) throw std::invalid_argument("bootstrap: fit has empty support");

  SieveDesign design(data, m);
  Eigen::MatrixXd fitted = sieve_fitted(design, post_fit.coef);
  if (r > 0) fitted.noalias() += post_fit.factors.gamma * post_fit.factors.f.transpose();
  Eigen::MatrixXd resid = data.y() - fitted;
  resid.array() -= resid.mean();

  SieveConfig sieve;
  sieve.m = m;

  // rep -> regressor -> grid values
  std::vector<Eigen::MatrixXd> rep_curves(b_reps);
  std::vector<char> rep_converged(b_reps, 0);
  parallel_for(b_reps, opts.threads, [&](int b) {
    auto eng = make_engine(seed, static_cast<std::uint64_t>(b));
    Eigen::MatrixXd ystar = fitted;
    if (opts.unit_block) {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int i = 0; i < n; ++i) ystar.row(i) += resid.row(pick(eng));
    } else {
      std::uniform_int_distribution<int> pick(0, n * t - 1);
      for (int i = 0; i < n; ++i) {
        for (int tt = 0; tt < t; ++tt) {
          const int idx = pick(eng);
          ystar(i, tt) += resid(idx / t, idx % t);
        }
      }
    }
    FitResult refit =
        post_selection_fit(data.with_response(std::move(ystar)), sieve, support, r, refit_cfg);
    rep_converged[b] = refit.converged ? 1 : 0;
    Eigen::MatrixXd curves(p, g_len);
    for (int j = 0; j < p; ++j) {
      for (int k = 0; k < g_len; ++k) {
        curves(j, k) = eval_coef_fn(refit.coef.c.row(j), grid[k]);
      }
    }
    rep_curves[b] = std::move(curves);
  });

  int n_conv = 0;
  for (char c : rep_converged) n_conv += c;
  if (diag != nullptr) {
    diag->converged = n_conv;
    diag->total = b_reps;
  }
  if (n_conv == 0) throw std::runtime_error("bootstrap: no replication converged");

  std::vector<CurveEstimate> out = coefficient_curves(post_fit, grid);
  const double alpha = (1.0 - level) / 2.0;
  std::vector<double> sample(b_reps);
  for (int j = 0; j < p; ++j) {
    out[j].level = level;
    out[j].lower.resize(g_len);
    out[j].upper.resize(g_len);
    for (int k = 0; k < g_len; ++k) {
      for (int b = 0; b < b_reps; ++b) sample[b] = rep_curves[b](j, k);
      out[j].lower[k] = percentile(sample, alpha);
      out[j].upper[k] = percentile(sample, 1.0 - alpha);
    }
  }
  return out;
}

VarianceDecomposition variance_decomposition(const PanelData& data, const FitResult& fit) {
  const int r = fit.factors.r();
  if (r < 1) throw std::invalid_argument("variance decomposition: fit has no factors");
  SieveDesign design(data, fit.coef.n_basis());
  Eigen::MatrixXd e = data.y() - sieve_fitted(design, fit.coef);
  const double total = e.squaredNorm();
  if (!(total > 0.0)) throw std::invalid_argument("variance decomposition: zero residual variance");
  const double t = static_cast<double>(data.n_periods());
  VarianceDecomposition out;
  out.shares.resize(r);
  out.cumulative.resize(r);
  double run = 0.0;
  for (int k = 0; k < r; ++k) {
    // sum_it (gamma_ik f_tk)^2 = ||gamma_k||^2 * ||f_k||^2 and ||f_k||^2 = T
    out.shares[k] = fit.factors.gamma.col(k).squaredNorm() * t / total;
    run += out.shares[k];
    out.cumulative[k] = run;
  }
  return out;
}

}  // namespace vcpanel
