#include "vcpanel/simulate.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "vcpanel/parallel.hpp"
#include "vcpanel/rng.hpp"

namespace vcpanel {

int DgpConfig::p_star() const {
  if (dgp_case == DgpCase::LD) return 2;
  return 2 * SieveConfig::rule_m(n_units, n_periods);
}

void DgpConfig::validate() const {
  if (n_units < 2 || n_periods < 2) throw std::invalid_argument("dgp: need N >= 2 and T >= 2");
  if (r_true < 1) throw std::invalid_argument("dgp: r_true must be >= 1");
  if (!(std::abs(ar_coef) < 1.0)) throw std::invalid_argument("dgp: |ar_coef| must be < 1");
  if (burn_in < 0) throw std::invalid_argument("dgp: burn_in must be >= 0");
  if (!(std::abs(innovation_cross_corr) < 1.0)) {
    throw std::invalid_argument("dgp: |innovation_cross_corr| must be < 1");
  }
  if (p_star() >= p()) throw std::invalid_argument("dgp: panel too large, p* would reach p");
}

double true_beta(int index, double z, const DgpConfig& cfg) {
  if (index < 0 || index >= cfg.p()) throw std::invalid_argument("true_beta: index out of range");
  if (index >= cfg.p_star()) return 0.0;
  if (index % 2 == 0) return std::exp(-0.5 * z * z) + 0.4;
  return z * std::exp(-0.5 * z * z) + 0.7;
}

Eigen::MatrixXd ar1_series(std::mt19937_64& eng, double coef, int burn_in, int length, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(dim, length);
  Eigen::VectorXd state = Eigen::VectorXd::Zero(dim);
  for (int step = 0; step < burn_in + length; ++step) {
    for (int d = 0; d < dim; ++d) state[d] = coef * state[d] + normal(eng);
    if (step >= burn_in) out.col(step - burn_in) = state;
  }
  return out;
}

Eigen::MatrixXd ar1_series_correlated(std::mt19937_64& eng, double coef, int burn_in, int length,
                                      const Eigen::MatrixXd& chol_lower) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int dim = static_cast<int>(chol_lower.rows());
  Eigen::MatrixXd out(dim, length);
  Eigen::VectorXd state = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd xi(dim);
  for (int step = 0; step < burn_in + length; ++step) {
    for (int d = 0; d < dim; ++d) xi[d] = normal(eng);
    state = coef * state + chol_lower * xi;
    if (step >= burn_in) out.col(step - burn_in) = state;
  }
  return out;
}

std::pair<PanelData, SimTruth> generate(const DgpConfig& cfg, double noise_scale) {
  cfg.validate();
  const int n = cfg.n_units;
  const int t = cfg.n_periods;
  const int p = cfg.p();
  const int ps = cfg.p_star();
  const int r = cfg.r_true;
  auto eng = make_engine(cfg.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimTruth truth;
  truth.f0.resize(t, r);
  for (int tt = 0; tt < t; ++tt) {
    for (int k = 0; k < r; ++k) truth.f0(tt, k) = normal(eng);
  }
  truth.gamma0.resize(n, r);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) truth.gamma0(i, k) = cfg.loading_mean + normal(eng);
  }

  std::vector<Eigen::MatrixXd> v(n);  // p x T per unit
  for (int i = 0; i < n; ++i) v[i] = ar1_series(eng, cfg.ar_coef, cfg.burn_in, t, p);

  Eigen::MatrixXd z(n, t);
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) z(i, tt) = std::abs(v[i](0, tt)) + normal(eng);
  }

  Eigen::MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) sigma(i, j) = std::pow(cfg.innovation_cross_corr, std::abs(i - j));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("dgp: innovation covariance is not positive definite");
  }
  Eigen::MatrixXd chol = llt.matrixL();
  truth.eps = noise_scale * ar1_series_correlated(eng, cfg.ar_coef, cfg.burn_in, t, chol);

  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, p));
  Eigen::MatrixXd y(n, t);
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) {
      const double common = std::abs(truth.gamma0.row(i).dot(truth.f0.row(tt)));
      for (int j = 0; j < p; ++j) x[i](tt, j) = v[i](j, tt) + common;
      double yy = truth.gamma0.row(i).dot(truth.f0.row(tt)) + truth.eps(i, tt);
      for (int j = 0; j < ps; ++j) yy += x[i](tt, j) * true_beta(j, z(i, tt), cfg);
      y(i, tt) = yy;
    }
  }

  truth.true_support.clear();
  truth.beta_fn.resize(p);
  for (int j = 0; j < p; ++j) {
    if (j < ps) {
      truth.true_support.insert(j);
      truth.beta_fn[j] = (j % 2 == 0) ? BetaShape::Bump : BetaShape::Wave;
    } else {
      truth.beta_fn[j] = BetaShape::Zero;
    }
  }

  std::vector<std::string> units(n), periods(t), names(p);
  for (int i = 0; i < n; ++i) units[i] = "u" + std::to_string(i + 1);
  for (int tt = 0; tt < t; ++tt) periods[tt] = std::to_string(tt + 1);
  for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  PanelData panel(std::move(y), std::move(x), std::move(z), std::move(units), std::move(periods),
                  std::move(names));
  return {std::move(panel), std::move(truth)};
}

std::vector<double> default_z_grid() {
  std::vector<double> grid(63);
  for (int k = 0; k < 63; ++k) grid[k] = -1.0 + 3.0 * k / 62.0;
  return grid;
}

namespace {

double percentile_sorted(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

struct RepOutcome {
  std::set<int> selected;
  Eigen::MatrixXd curves;  // p x grid, zeros for unselected rows
  bool converged = true;
  bool support_violation = false;
  int r_used = 0;
};

}  // namespace

McReport monte_carlo(const DgpConfig& cfg, int reps, const McConfig& mc) {
  if (reps < 1) throw std::invalid_argument("monte_carlo: reps must be >= 1");
  cfg.validate();
  const int p = cfg.p();
  const int ps = cfg.p_star();
  const int g_len = static_cast<int>(mc.grid.size());
  if (g_len == 0) throw std::invalid_argument("monte_carlo: empty grid");

  PipelineConfig pipe_cfg;
  pipe_cfg.sieve = mc.sieve;
  pipe_cfg.fit = mc.fit;
  pipe_cfg.path = mc.path;
  pipe_cfg.regime =
      mc.regime.value_or(cfg.dgp_case == DgpCase::LD ? Regime::LD : Regime::HD);

  std::vector<RepOutcome> outcomes(reps);
  parallel_for(reps, mc.threads, [&](int rep) {
    DgpConfig rep_cfg = cfg;
    rep_cfg.seed = cfg.seed + static_cast<std::uint64_t>(rep);
    auto [panel, truth] = generate(rep_cfg, mc.noise_scale);

    PipelineConfig local = pipe_cfg;
    local.fit.seed = rep_cfg.seed;

    int r_used = cfg.r_true;
    if (mc.select_r) {
      auto [r_star, table] = select_num_factors(panel, mc.r_max, local, 1);
      r_used = r_star;
    }
    PipelineResult pipe = run_selection_pipeline(panel, r_used, local);

    RepOutcome& out = outcomes[rep];
    out.selected = pipe.selection.selected;
    out.r_used = r_used;
    out.converged = pipe.selection.post_fit.converged && pipe.selection.fit.converged;
    out.support_violation = pipe.selection.support_violations > 0;
    out.curves = Eigen::MatrixXd::Zero(p, g_len);
    for (int j : out.selected) {
      for (int k = 0; k < g_len; ++k) {
        out.curves(j, k) = eval_coef_fn(pipe.selection.post_fit.coef.c.row(j), mc.grid[k]);
      }
    }
  });

  McReport report;
  report.reps = reps;
  report.p = p;
  report.p_star = ps;
  report.grid = mc.grid;
  std::set<int> ever_selected;
  for (const auto& out : outcomes) {
    for (int j = 0; j < ps; ++j) {
      if (!out.selected.count(j)) ++report.missed_true;
    }
    for (int j = ps; j < p; ++j) {
      if (out.selected.count(j)) ++report.false_positives;
    }
    if (!out.converged) ++report.nonconverged;
    if (out.support_violation) ++report.support_violation_reps;
    for (int j : out.selected) ever_selected.insert(j);
    if (mc.select_r) report.selected_r.push_back(out.r_used);
  }
  report.fnr_pct = 100.0 * static_cast<double>(report.missed_true) /
                   (static_cast<double>(reps) * ps);
  report.fpr_pct = p > ps ? 100.0 * static_cast<double>(report.false_positives) /
                                (static_cast<double>(reps) * (p - ps))
                          : 0.0;

  std::vector<double> sample(reps);
  for (int j : ever_selected) {
    McCurve curve;
    curve.regressor = j;
    curve.mean.resize(g_len);
    curve.lo.resize(g_len);
    curve.hi.resize(g_len);
    for (int k = 0; k < g_len; ++k) {
      double acc = 0.0;
      for (int rep = 0; rep < reps; ++rep) {
        sample[rep] = outcomes[rep].curves(j, k);
        acc += sample[rep];
      }
      curve.mean[k] = acc / reps;
      curve.lo[k] = percentile_sorted(sample, 0.025);
      curve.hi[k] = percentile_sorted(sample, 0.975);
    }
    report.curves.push_back(std::move(curve));
  }
  return report;
}

}  // namespace vcpanel
