#include "vcpanel/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vcpanel/rng.hpp"

namespace vcpanel {

namespace {

constexpr double kProjectorTol = 1e-6;
constexpr double kSolveTol = 1e-8;

void check_factor_normalization(const Eigen::MatrixXd& f) {
  const int r = static_cast<int>(f.cols());
  if (r == 0) return;
  const double t = static_cast<double>(f.rows());
  Eigen::MatrixXd g = f.transpose() * f / t - Eigen::MatrixXd::Identity(r, r);
  if (g.cwiseAbs().maxCoeff() > kProjectorTol) {
    throw std::invalid_argument("factor matrix violates F'F/T = I beyond 1e-6");
  }
}

// Internal state of one alternating run, working on the cached design.
struct Sweeper {
  const SieveDesign& d;
  Eigen::VectorXd lambda;
  double zero_floor;

  int n, t, p, m, mp;
  Eigen::MatrixXd w;  // residuals Y - phi, N x T

  explicit Sweeper(const SieveDesign& design, Eigen::VectorXd lam, double zf)
      : d(design), lambda(std::move(lam)), zero_floor(zf) {
    n = d.n_units();
    t = d.n_periods();
    p = d.n_regressors();
    m = d.m();
    mp = m * p;
  }

  // Gram and rhs of the projected normal equations for the current F.
  void projected_system(const Eigen::MatrixXd& f, Eigen::MatrixXd* gram,
                        Eigen::VectorXd* rhs) const {
    *gram = d.gram0();
    *rhs = d.zy0();
    const int r = static_cast<int>(f.cols());
    if (r == 0) return;
    Eigen::MatrixXd zf(mp, n * r);  // all Z_i'F side by side
    Eigen::VectorXd fy(n * r);
    for (int i = 0; i < n; ++i) {
      zf.middleCols(i * r, r).noalias() = d.design(i).transpose() * f;
      fy.segment(i * r, r).noalias() = f.transpose() * d.y().row(i).transpose();
    }
    gram->noalias() -= zf * zf.transpose() / static_cast<double>(t);
    rhs->noalias() -= zf * fy / static_cast<double>(t);
  }

  // One coefficient solve. When prev is null the penalty weights are not yet
  // defined and the update is unpenalized (D = 0), which also seeds the
  // adaptive weights for the following sweeps.
  CoefficientMatrix coefficient_step(const Eigen::MatrixXd& f, const CoefficientMatrix* prev) {
    Eigen::MatrixXd gram;
    Eigen::VectorXd rhs;
    projected_system(f, &gram, &rhs);

    std::set<int> frozen;
    Eigen::VectorXd diag_weight = Eigen::VectorXd::Zero(p);
    if (prev != nullptr) {
      frozen = prev->zero_rows;
      const double floor_norm = zero_floor * std::sqrt(static_cast<double>(m));
      for (int j = 0; j < p; ++j) {
        if (frozen.count(j)) continue;
        const double nj = prev->row_norm(j);
        if (lambda[j] > 0.0) {
          if (nj < floor_norm) {
            frozen.insert(j);
          } else {
            diag_weight[j] = lambda[j] / nj;
          }
        }
      }
    }

    std::vector<int> active;
    active.reserve(p);
    for (int j = 0; j < p; ++j) {
      if (!frozen.count(j)) active.push_back(j);
    }

    CoefficientMatrix out;
    out.c = Eigen::MatrixXd::Zero(p, m);
    out.zero_rows = frozen;
    if (active.empty()) return out;

    const int pa = static_cast<int>(active.size());
    Eigen::VectorXi idx(m * pa);
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < pa; ++k) idx[j * pa + k] = j * p + active[k];
    }
    Eigen::MatrixXd a(m * pa, m * pa);
    Eigen::VectorXd b(m * pa);
    for (int r2 = 0; r2 < m * pa; ++r2) {
      b[r2] = rhs[idx[r2]];
      for (int c2 = 0; c2 < m * pa; ++c2) a(r2, c2) = gram(idx[r2], idx[c2]);
    }
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < pa; ++k) a(j * pa + k, j * pa + k) += diag_weight[active[k]] / 2.0;
    }

    Eigen::VectorXd sol = solve_spd(a, b);
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < pa; ++k) out.c(active[k], j) = sol[j * pa + k];
    }
    return out;
  }

  static Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const double bnorm = b.norm();
    const double tol = kSolveTol * std::max(bnorm, std::numeric_limits<double>::min());
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd x = llt.solve(b);
      if ((a * x - b).norm() <= tol) return x;
    }
    // LLT refused: either mildly indefinite from rounding or genuinely rank
    // deficient. A near-zero LDLT pivot means the solution is not unique
    // even when the system happens to be consistent.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    const bool rank_ok = d.minCoeff() > 1e-12 * d.maxCoeff();
    Eigen::VectorXd x = ldlt.solve(b);
    if (ldlt.info() == Eigen::Success && rank_ok && (a * x - b).norm() <= tol) return x;
    throw std::runtime_error(
        "coefficient update: singular or ill-conditioned normal equations "
        "(m*p too large for N*T?); reduce m, drop regressors, or add ridge jitter");
  }

  void update_residuals(const CoefficientMatrix& coef) {
    // vec(C) stacked column-major matches the design-row layout j*p+k.
    Eigen::Map<const Eigen::VectorXd> vec_c(coef.c.data(), mp);
    w.resize(n, t);
    for (int i = 0; i < n; ++i) {
      w.row(i) = d.y().row(i) - (d.design(i) * vec_c).transpose();
    }
  }

  // PCA factor update on the current residuals. Returns rss after projection.
  double factor_step(int r, FactorEstimate* est) const {
    const double nt = static_cast<double>(n) * static_cast<double>(t);
    if (r == 0) {
      est->f.resize(t, 0);
      est->gamma.resize(n, 0);
      est->eigenvalues.resize(0);
      return w.squaredNorm();
    }
    Eigen::MatrixXd s = w.transpose() * w / nt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) {
      throw std::runtime_error("factor update: eigensolver failed");
    }
    est->f.resize(t, r);
    est->eigenvalues.resize(r);
    for (int k = 0; k < r; ++k) {
      Eigen::VectorXd v = eig.eigenvectors().col(t - 1 - k);
      int imax;
      v.cwiseAbs().maxCoeff(&imax);
      if (v[imax] < 0.0) v = -v;
      est->f.col(k) = std::sqrt(static_cast<double>(t)) * v;
      est->eigenvalues[k] = eig.eigenvalues()[t - 1 - k];
    }
    est->gamma.noalias() = w * est->f / static_cast<double>(t);
    return w.squaredNorm() - (w * est->f).squaredNorm() / static_cast<double>(t);
  }

  double penalty(const CoefficientMatrix& coef) const {
    double s = 0.0;
    for (int j = 0; j < p; ++j) s += lambda[j] * coef.row_norm(j);
    return s;
  }
};

Eigen::MatrixXd random_orthonormal_factors(int t, int r, std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd f0(t, r);
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < t; ++i) f0(i, j) = normal(eng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(f0);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(t, r);
  return std::sqrt(static_cast<double>(t)) * q;
}

void validate_lambda(const Eigen::VectorXd& lambda, int p) {
  if (static_cast<int>(lambda.size()) != p) {
    throw std::invalid_argument("lambda must have one entry per regressor");
  }
  if ((lambda.array() < 0.0).any()) throw std::invalid_argument("lambda must be nonnegative");
}

}  // namespace

CoefficientMatrix CoefficientMatrix::zero(int p, int m) {
  CoefficientMatrix out;
  out.c = Eigen::MatrixXd::Zero(p, m);
  return out;
}

SieveDesign::SieveDesign(const PanelData& data, int m) : t_(data.n_periods()), m_(m) {
  if (m < 1) throw std::invalid_argument("sieve design: m must be >= 1");
  p_ = data.n_regressors();
  const int n = data.n_units();
  const int mp = m_ * p_;
  y_ = data.y();
  z_.resize(n);
  gram0_ = Eigen::MatrixXd::Zero(mp, mp);
  zy0_ = Eigen::VectorXd::Zero(mp);
  std::vector<double> h(m_);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd zi(t_, mp);
    for (int tt = 0; tt < t_; ++tt) {
      hermite_basis_into(data.z()(i, tt), m_, h.data());
      for (int j = 0; j < m_; ++j) {
        zi.row(tt).segment(static_cast<Eigen::Index>(j) * p_, p_) = h[j] * data.x(i).row(tt);
      }
    }
    gram0_.selfadjointView<Eigen::Lower>().rankUpdate(zi.transpose());
    zy0_.noalias() += zi.transpose() * y_.row(i).transpose();
    z_[i] = std::move(zi);
  }
  gram0_ = gram0_.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd sieve_fitted(const SieveDesign& design, const CoefficientMatrix& coef) {
  const int n = design.n_units();
  const int mp = design.m() * design.n_regressors();
  Eigen::Map<const Eigen::VectorXd> vec_c(coef.c.data(), mp);
  Eigen::MatrixXd out(n, design.n_periods());
  for (int i = 0; i < n; ++i) out.row(i) = (design.design(i) * vec_c).transpose();
  return out;
}

Eigen::VectorXd residual_projector_apply(const Eigen::MatrixXd& f,
                                         const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (f.cols() == 0) return v;
  if (f.rows() != v.size()) throw std::invalid_argument("projector: dimension mismatch");
  check_factor_normalization(f);
  return v - f * (f.transpose() * v) / static_cast<double>(f.rows());
}

CoefficientMatrix update_coefficients(const PanelData& data, const Eigen::MatrixXd& f,
                                      const Eigen::VectorXd& lambda,
                                      const CoefficientMatrix& c_prev, double zero_floor) {
  validate_lambda(lambda, data.n_regressors());
  if (c_prev.n_rows() != data.n_regressors()) {
    throw std::invalid_argument("update_coefficients: coefficient rows != regressors");
  }
  check_factor_normalization(f);
  SieveDesign design(data, c_prev.n_basis());
  Sweeper sweeper(design, lambda, zero_floor);
  return sweeper.coefficient_step(f, &c_prev);
}

FactorEstimate update_factors(const PanelData& data, const CoefficientMatrix& coef, int r) {
  const int bound = std::min(data.n_units(), data.n_periods()) - 1;
  if (r < 1 || r > bound) {
    throw std::invalid_argument("update_factors: r must satisfy 1 <= r <= min(N,T)-1");
  }
  SieveDesign design(data, coef.n_basis());
  Sweeper sweeper(design, Eigen::VectorXd::Zero(data.n_regressors()), 0.0);
  sweeper.update_residuals(coef);
  FactorEstimate est;
  sweeper.factor_step(r, &est);
  return est;
}

double objective_value(const PanelData& data, const CoefficientMatrix& coef,
                       const Eigen::MatrixXd& f, const Eigen::VectorXd& lambda) {
  validate_lambda(lambda, data.n_regressors());
  check_factor_normalization(f);
  SieveDesign design(data, coef.n_basis());
  Eigen::MatrixXd resid = design.y() - sieve_fitted(design, coef);
  double rss = resid.squaredNorm();
  if (f.cols() > 0) rss -= (resid * f).squaredNorm() / static_cast<double>(f.rows());
  double pen = 0.0;
  for (int j = 0; j < coef.n_rows(); ++j) pen += lambda[j] * coef.row_norm(j);
  return rss + pen;
}

FitResult fit(const SieveDesign& design, int r, const Eigen::VectorXd& lambda,
              const FitConfig& cfg, const FitStart* warm) {
  validate_lambda(lambda, design.n_regressors());
  if (r < 0) throw std::invalid_argument("fit: r must be >= 0");
  if (r > 0 && r > std::min(design.n_units(), design.n_periods()) - 1) {
    throw std::invalid_argument("fit: r must be <= min(N,T)-1");
  }
  if (cfg.tol <= 0.0 || cfg.max_iter < 1 || cfg.n_starts < 1) {
    throw std::invalid_argument("fit: invalid FitConfig");
  }

  const int n_starts = warm != nullptr ? 1 : cfg.n_starts;
  FitResult best;
  bool have_best = false;

  for (int start = 0; start < n_starts; ++start) {
    Sweeper sweeper(design, lambda, cfg.zero_floor);
    Eigen::MatrixXd f;
    CoefficientMatrix coef;
    bool have_coef = false;
    if (warm != nullptr) {
      coef = warm->coef;
      f = warm->f;
      have_coef = true;
      check_factor_normalization(f);
    } else if (r > 0) {
      auto eng = make_engine(cfg.seed, static_cast<std::uint64_t>(start));
      f = random_orthonormal_factors(design.n_periods(), r, eng);
    } else {
      f.resize(design.n_periods(), 0);
    }

    FitResult run;
    run.objective_trace.reserve(16);
    FactorEstimate factors;
    double rss = 0.0;
    bool converged = false;
    int it = 0;
    while (it < cfg.max_iter) {
      ++it;
      CoefficientMatrix next = sweeper.coefficient_step(f, have_coef ? &coef : nullptr);
      double delta = std::numeric_limits<double>::infinity();
      if (have_coef) {
        delta = (next.c - coef.c).norm() / (1.0 + coef.c.norm());
      }
      coef = std::move(next);
      have_coef = true;
      sweeper.update_residuals(coef);
      rss = sweeper.factor_step(r, &factors);
      if (r > 0) f = factors.f;
      run.objective_trace.push_back(rss + sweeper.penalty(coef));
      if (delta <= cfg.tol) {
        converged = true;
        break;
      }
    }
    run.coef = std::move(coef);
    run.factors = std::move(factors);
    run.rss = rss;
    run.objective = run.objective_trace.back();
    run.iterations = it;
    run.converged = converged;
    if (!have_best || run.objective < best.objective) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

FitResult fit(const PanelData& data, const SieveConfig& sieve, int r,
              const Eigen::VectorXd& lambda, const FitConfig& cfg) {
  SieveDesign design(data, sieve.resolve(data.n_units(), data.n_periods()));
  return fit(design, r, lambda, cfg);
}

FitResult post_selection_fit(const PanelData& data, const SieveConfig& sieve,
                             const std::set<int>& selected, int r, const FitConfig& cfg) {
  if (selected.empty()) throw std::invalid_argument("post-selection fit: empty regressor set");
  PanelData sub = data.restrict_regressors(selected);
  const int m = sieve.resolve(data.n_units(), data.n_periods());
  SieveDesign design(sub, m);
  FitResult small = fit(design, r, Eigen::VectorXd::Zero(sub.n_regressors()), cfg);

  FitResult out = small;
  out.coef.c = Eigen::MatrixXd::Zero(data.n_regressors(), m);
  out.coef.zero_rows.clear();
  int row = 0;
  for (int j : selected) out.coef.c.row(j) = small.coef.c.row(row++);
  for (int j = 0; j < data.n_regressors(); ++j) {
    if (!selected.count(j)) out.coef.zero_rows.insert(j);
  }
  return out;
}

}  // namespace vcpanel
