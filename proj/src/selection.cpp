#include "vcpanel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vcpanel/parallel.hpp"

namespace vcpanel {

CoefficientMatrix unpenalized_baseline(const PanelData& data, const SieveConfig& sieve, int r,
                                       const FitConfig& cfg) {
  return fit(data, sieve, r, Eigen::VectorXd::Zero(data.n_regressors()), cfg).coef;
}

LambdaPath build_lambda_path(const FitResult& baseline, int n_units, int n_periods,
                             Regime regime, double zero_floor, const PathOptions& opts) {
  if (opts.grid_size < 1) throw std::invalid_argument("lambda path: empty grid");
  if (!(opts.lo_factor > 0.0) || !(opts.hi_factor > opts.lo_factor)) {
    throw std::invalid_argument("lambda path: need 0 < lo_factor < hi_factor");
  }
  const int p = baseline.coef.n_rows();
  LambdaPath path;
  path.regime = regime;
  path.weights.resize(p);
  for (int j = 0; j < p; ++j) {
    path.weights[j] = 1.0 / std::max(baseline.coef.row_norm(j), zero_floor);
  }
  const double nt = static_cast<double>(n_units) * n_periods;
  double scale = nt * (baseline.rss / nt) / path.weights.sum();
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0 / path.weights.sum();
  path.nu_grid.resize(opts.grid_size);
  if (opts.grid_size == 1) {
    path.nu_grid[0] = scale * std::sqrt(opts.lo_factor * opts.hi_factor);
  } else {
    const double log_lo = std::log(opts.lo_factor * scale);
    const double step = (std::log(opts.hi_factor * scale) - log_lo) / (opts.grid_size - 1);
    for (int g = 0; g < opts.grid_size; ++g) path.nu_grid[g] = std::exp(log_lo + g * step);
  }
  return path;
}

double bic_value(double rss_norm, int df, int n_units, Regime regime, int xi) {
  if (!(rss_norm > 0.0)) throw std::invalid_argument("bic_value: rss must be positive");
  if (df < 0) throw std::invalid_argument("bic_value: df must be nonnegative");
  if (regime == Regime::LD) {
    const double n = static_cast<double>(n_units);
    return std::log(rss_norm) + df * std::log(n) / std::pow(n, 0.25);
  }
  const double x = static_cast<double>(xi);
  if (!(x > 1.0)) throw std::invalid_argument("bic_value: xi must exceed 1");
  return std::log(rss_norm) + df * std::log(x) / std::pow(x, 0.125);
}

int count_df(const CoefficientMatrix& coef, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("count_df: threshold must be positive");
  int df = 0;
  for (int j = 0; j < coef.n_rows(); ++j) {
    if (coef.row_norm(j) > threshold) ++df;
  }
  return df;
}

double default_df_threshold(const CoefficientMatrix& coef) {
  double max_norm = 0.0;
  for (int j = 0; j < coef.n_rows(); ++j) max_norm = std::max(max_norm, coef.row_norm(j));
  return std::max(1e-4 * max_norm, 1e-10);
}

namespace {

std::set<int> surviving_rows(const CoefficientMatrix& coef) {
  const double thr = default_df_threshold(coef);
  std::set<int> out;
  for (int j = 0; j < coef.n_rows(); ++j) {
    if (coef.row_norm(j) > thr) out.insert(j);
  }
  return out;
}

// Factor-only result for the degenerate empty-support winner: C = 0, factors
// from PCA on the raw response.
FitResult factor_only_fit(const PanelData& data, const SieveDesign& design, int r) {
  FitResult out;
  out.coef = CoefficientMatrix::zero(design.n_regressors(), design.m());
  for (int j = 0; j < design.n_regressors(); ++j) out.coef.zero_rows.insert(j);
  if (r > 0) {
    out.factors = update_factors(data, out.coef, r);
    out.rss = design.y().squaredNorm() -
              (design.y() * out.factors.f).squaredNorm() / data.n_periods();
  } else {
    out.factors.f.resize(data.n_periods(), 0);
    out.factors.gamma.resize(data.n_units(), 0);
    out.rss = design.y().squaredNorm();
  }
  out.objective = out.rss;
  out.converged = true;
  out.iterations = 0;
  out.objective_trace = {out.objective};
  return out;
}

}  // namespace

SelectionResult select_lambda(const PanelData& data, const SieveDesign& design, int r,
                              const LambdaPath& path, const FitConfig& cfg) {
  if (path.nu_grid.empty()) throw std::invalid_argument("select_lambda: empty nu grid");
  if (static_cast<int>(path.weights.size()) != design.n_regressors()) {
    throw std::invalid_argument("select_lambda: weights/regressor count mismatch");
  }
  for (size_t g = 1; g < path.nu_grid.size(); ++g) {
    if (!(path.nu_grid[g] > path.nu_grid[g - 1])) {
      throw std::invalid_argument("select_lambda: nu grid must be strictly increasing");
    }
  }
  const double nt = static_cast<double>(data.n_units()) * data.n_periods();
  const int xi = std::min(data.n_units(), data.n_periods());

  SelectionResult out;
  out.bic_table.reserve(path.nu_grid.size());
  FitStart warm;
  bool have_warm = false;
  bool any_ok = false;
  int best_idx = -1;
  std::vector<FitResult> keep(path.nu_grid.size());
  int prev_df = -1;
  for (size_t g = 0; g < path.nu_grid.size(); ++g) {
    const double nu = path.nu_grid[g];
    Eigen::VectorXd lambda = nu * path.weights;
    FitResult res;
    try {
      res = fit(design, r, lambda, cfg, have_warm ? &warm : nullptr);
    } catch (const std::exception&) {
      BicRecord rec;
      rec.nu = nu;
      rec.converged = false;
      rec.rss_norm = std::numeric_limits<double>::quiet_NaN();
      rec.bic = std::numeric_limits<double>::quiet_NaN();
      out.bic_table.push_back(rec);
      continue;
    }
    warm.coef = res.coef;
    warm.f = res.factors.f;
    have_warm = true;

    BicRecord rec;
    rec.nu = nu;
    rec.rss_norm = res.rss / nt;
    rec.df = count_df(res.coef, default_df_threshold(res.coef));
    rec.bic = bic_value(std::max(rec.rss_norm, 1e-300), rec.df, data.n_units(), path.regime, xi);
    rec.converged = res.converged;
    if (prev_df >= 0 && rec.df > prev_df) ++out.support_violations;
    prev_df = rec.df;
    keep[g] = std::move(res);
    any_ok = true;
    if (best_idx < 0 || rec.bic < out.bic_table[best_idx].bic) {
      best_idx = static_cast<int>(out.bic_table.size());
    }
    out.bic_table.push_back(rec);
  }
  if (!any_ok) throw std::runtime_error("select_lambda: every path fit failed");

  // bic_table rows and kept fits line up only when no fit failed; recover the
  // fit index by matching nu.
  const BicRecord& best = out.bic_table[best_idx];
  size_t fit_idx = 0;
  for (size_t g = 0; g < path.nu_grid.size(); ++g) {
    if (path.nu_grid[g] == best.nu) {
      fit_idx = g;
      break;
    }
  }
  out.best_nu = best.nu;
  out.best_lambda = best.nu * path.weights;
  out.fit = std::move(keep[fit_idx]);
  out.selected = surviving_rows(out.fit.coef);
  SieveConfig sieve;
  sieve.m = design.m();
  if (out.selected.empty()) {
    out.post_fit = factor_only_fit(data, design, r);
  } else {
    out.post_fit = post_selection_fit(data, sieve, out.selected, r, cfg);
  }
  return out;
}

SelectionResult select_lambda(const PanelData& data, const SieveConfig& sieve, int r,
                              const LambdaPath& path, const FitConfig& cfg) {
  SieveDesign design(data, sieve.resolve(data.n_units(), data.n_periods()));
  return select_lambda(data, design, r, path, cfg);
}

double pic_value(double sigma2, int n_units, int n_periods, int r) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("pic_value: sigma^2 must be positive");
  if (r < 0) throw std::invalid_argument("pic_value: r must be nonnegative");
  const double n = static_cast<double>(n_units);
  const double t = static_cast<double>(n_periods);
  return sigma2 * (1.0 + r * (n + t) / (n * t) * std::log(n * t));
}

PipelineResult run_selection_pipeline(const PanelData& data, const SieveDesign& design, int r,
                                      const PipelineConfig& cfg) {
  PipelineResult out;
  out.m = design.m();
  out.baseline = fit(design, r, Eigen::VectorXd::Zero(data.n_regressors()), cfg.fit);
  out.path = build_lambda_path(out.baseline, data.n_units(), data.n_periods(), cfg.regime,
                               cfg.fit.zero_floor, cfg.path);
  out.selection = select_lambda(data, design, r, out.path, cfg.fit);
  return out;
}

PipelineResult run_selection_pipeline(const PanelData& data, int r, const PipelineConfig& cfg) {
  SieveDesign design(data, cfg.sieve.resolve(data.n_units(), data.n_periods()));
  return run_selection_pipeline(data, design, r, cfg);
}

std::pair<int, std::vector<PicRecord>> select_num_factors(const PanelData& data, int r_max,
                                                          const PipelineConfig& cfg,
                                                          int threads) {
  const int bound = std::min(data.n_units(), data.n_periods()) - 1;
  if (r_max < 1 || r_max > bound) {
    throw std::invalid_argument("select_num_factors: need 1 <= r_max <= min(N,T)-1");
  }
  SieveDesign design(data, cfg.sieve.resolve(data.n_units(), data.n_periods()));
  const double nt = static_cast<double>(data.n_units()) * data.n_periods();
  std::vector<PicRecord> table(r_max);
  parallel_for(r_max, threads, [&](int k) {
    const int r = k + 1;
    PipelineResult pipe = run_selection_pipeline(data, design, r, cfg);
    const FitResult& post = pipe.selection.post_fit;
    Eigen::MatrixXd resid = design.y() - sieve_fitted(design, post.coef);
    if (post.factors.r() > 0) {
      resid.noalias() -= post.factors.gamma * post.factors.f.transpose();
    }
    PicRecord rec;
    rec.r = r;
    rec.sigma2 = resid.squaredNorm() / nt;
    rec.pic = pic_value(rec.sigma2, data.n_units(), data.n_periods(), r);
    rec.selected_count = static_cast<int>(pipe.selection.selected.size());
    table[k] = rec;
  });
  int best = 0;
  for (int k = 1; k < r_max; ++k) {
    if (table[k].pic < table[best].pic) best = k;
  }
  return {table[best].r, table};
}

}  // namespace vcpanel
