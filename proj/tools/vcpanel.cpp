// Command-line front end: simulate panels, run the Monte Carlo harness, fit
// and tune on a panel CSV, and bootstrap confidence bands around a stored
// fit. Every command writes a run-manifest.json with the resolved
// configuration and artifact hashes; reruns with the same inputs and seed are
// byte-identical except for the manifest timestamp.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "vcpanel/inference.hpp"
#include "vcpanel/panel.hpp"
#include "vcpanel/selection.hpp"
#include "vcpanel/simulate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vcpanel;

namespace {

constexpr int kExitNonconverged = 3;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    for (size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

// Collects artifacts as they are written and emits the manifest last.
class RunManifest {
 public:
  RunManifest(fs::path out_dir, std::string command)
      : out_dir_(std::move(out_dir)), command_(std::move(command)) {}

  void set_config(json cfg) { config_ = std::move(cfg); }

  void record(const fs::path& path) {
    json entry;
    entry["path"] = fs::relative(path, out_dir_).string();
    entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(path));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(path)));
    entry["fnv1a64"] = buf;
    artifacts_.push_back(std::move(entry));
  }

  void write() const {
    json doc;
    doc["command"] = command_;
    doc["config"] = config_;
    doc["artifacts"] = artifacts_;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    doc["timestamp_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    std::ofstream out(out_dir_ / "run-manifest.json");
    out << doc.dump(2) << '\n';
  }

 private:
  fs::path out_dir_;
  std::string command_;
  json config_;
  json artifacts_ = json::array();
};

struct CommonOpts {
  std::string config_display;  // help-only; --config expands before parsing
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  bool allow_nonconverged = false;

  int resolved_threads() const {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", opts->config_display,
                  "Flat key=value configuration file; flags override it");
  const char* env_out = std::getenv("VCPANEL_OUT");
  if (env_out != nullptr && *env_out != '\0') opts->out_dir = env_out;
  cmd->add_option("--out", opts->out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", opts->seed, "Master seed")->capture_default_str();
  cmd->add_option("--threads", opts->threads,
                  "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  cmd->add_flag("--allow-nonconverged", opts->allow_nonconverged,
                "Exit 0 even when some fit did not converge");
}

fs::path prepare_out(const CommonOpts& opts) {
  fs::path dir(opts.out_dir);
  fs::create_directories(dir);
  return dir;
}

DgpCase parse_case(const std::string& s) {
  if (s == "ld") return DgpCase::LD;
  if (s == "hd") return DgpCase::HD;
  throw CLI::ValidationError("--case", "must be 'ld' or 'hd'");
}

Regime parse_regime(const std::string& s, const PanelData& data) {
  if (s == "ld") return Regime::LD;
  if (s == "hd") return Regime::HD;
  if (s == "auto") {
    const double nt = static_cast<double>(data.n_units()) * data.n_periods();
    return data.n_regressors() > std::sqrt(nt) ? Regime::HD : Regime::LD;
  }
  throw CLI::ValidationError("--regime", "must be 'ld', 'hd' or 'auto'");
}

std::vector<double> make_grid(double lo, double hi, int points) {
  if (points < 1 || !(hi > lo)) throw CLI::ValidationError("--grid", "invalid grid range");
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = lo;
    return g;
  }
  for (int k = 0; k < points; ++k) g[k] = lo + (hi - lo) * k / (points - 1);
  return g;
}

void write_curves_csv(const fs::path& path, const std::vector<CurveEstimate>& curves,
                      bool with_bands) {
  std::ofstream out(path);
  out << "regressor,z,point,lower,upper\n";
  for (const auto& c : curves) {
    for (size_t k = 0; k < c.grid.size(); ++k) {
      out << (c.regressor + 1) << ',' << fmt17(c.grid[k]) << ',' << fmt17(c.point[k]) << ',';
      if (with_bands && !c.lower.empty()) {
        out << fmt17(c.lower[k]) << ',' << fmt17(c.upper[k]);
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
}

json fit_to_json(const FitResult& res, int m, int r, const std::set<int>& selected) {
  json doc;
  doc["m"] = m;
  doc["r"] = r;
  doc["selected"] = selected;  // 0-based
  doc["coefficients"] = matrix_to_json(res.coef.c);
  doc["zero_rows"] = res.coef.zero_rows;
  doc["factors"] = matrix_to_json(res.factors.f);
  doc["loadings"] = matrix_to_json(res.factors.gamma);
  json eig = json::array();
  for (Eigen::Index k = 0; k < res.factors.eigenvalues.size(); ++k) {
    eig.push_back(res.factors.eigenvalues[k]);
  }
  doc["eigenvalues"] = eig;
  doc["rss"] = res.rss;
  doc["objective"] = res.objective;
  doc["iterations"] = res.iterations;
  doc["converged"] = res.converged;
  return doc;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  CommonOpts common;
  std::string dgp_case = "ld";
  int n = 40, t = 40, r_true = 3, burn_in = 200;
  double ar_coef = 0.5, loading_mean = 0.5, cross_corr = 0.5, noise_scale = 1.0;
};

int cmd_simulate(const SimulateOpts& o) {
  fs::path dir = prepare_out(o.common);
  RunManifest manifest(dir, "simulate");

  DgpConfig cfg;
  cfg.n_units = o.n;
  cfg.n_periods = o.t;
  cfg.dgp_case = parse_case(o.dgp_case);
  cfg.r_true = o.r_true;
  cfg.ar_coef = o.ar_coef;
  cfg.loading_mean = o.loading_mean;
  cfg.innovation_cross_corr = o.cross_corr;
  cfg.burn_in = o.burn_in;
  cfg.seed = o.common.seed;

  auto [panel, truth] = generate(cfg, o.noise_scale);
  const fs::path panel_path = dir / "panel.csv";
  write_panel_csv(panel, panel_path.string());
  manifest.record(panel_path);

  json tj;
  tj["case"] = o.dgp_case;
  tj["n_units"] = cfg.n_units;
  tj["n_periods"] = cfg.n_periods;
  tj["p"] = cfg.p();
  tj["p_star"] = cfg.p_star();
  tj["r_true"] = cfg.r_true;
  tj["seed"] = cfg.seed;
  tj["noise_scale"] = o.noise_scale;
  tj["true_support"] = truth.true_support;  // 0-based
  json fns = json::array();
  for (auto shape : truth.beta_fn) {
    fns.push_back(shape == BetaShape::Bump ? "bump" : shape == BetaShape::Wave ? "wave" : "zero");
  }
  tj["beta_fn"] = fns;
  const fs::path truth_path = dir / "truth.json";
  {
    std::ofstream out(truth_path);
    out << tj.dump(2) << '\n';
  }
  manifest.record(truth_path);

  json cj;
  cj["case"] = o.dgp_case;
  cj["n"] = o.n;
  cj["t"] = o.t;
  cj["r_true"] = o.r_true;
  cj["ar_coef"] = o.ar_coef;
  cj["loading_mean"] = o.loading_mean;
  cj["cross_corr"] = o.cross_corr;
  cj["burn_in"] = o.burn_in;
  cj["noise_scale"] = o.noise_scale;
  cj["seed"] = o.common.seed;
  manifest.set_config(cj);
  manifest.write();
  return 0;
}

// ---------------------------------------------------------------------- mc

struct McOpts {
  CommonOpts common;
  std::string dgp_case = "ld";
  std::string regime = "auto";  // auto = match the case
  std::vector<int> grid_sizes;
  int n = 40, t = 40, reps = 100, r_true = 3, r_max = 6;
  bool select_r = false;
  double grid_lo = -1.0, grid_hi = 2.0;
  int grid_points = 63;
  double noise_scale = 1.0;
  int m = 0;
  int emit_panel = -1;
};

int cmd_mc(const McOpts& o) {
  fs::path dir = prepare_out(o.common);
  RunManifest manifest(dir, "mc");

  struct Cell {
    int n, t;
  };
  std::vector<Cell> cells;
  if (!o.grid_sizes.empty()) {
    for (int s : o.grid_sizes) cells.push_back({s, s});
  } else {
    cells.push_back({o.n, o.t});
  }

  std::ofstream table(dir / "fnr_fpr.csv");
  table << "case,n,t,reps,fnr_pct,fpr_pct,nonconverged\n";

  int nonconverged_total = 0;
  for (const Cell& cell : cells) {
    DgpConfig cfg;
    cfg.n_units = cell.n;
    cfg.n_periods = cell.t;
    cfg.dgp_case = parse_case(o.dgp_case);
    cfg.r_true = o.r_true;
    cfg.seed = o.common.seed;

    McConfig mc;
    mc.sieve.m = o.m;
    mc.fit.seed = o.common.seed;
    mc.threads = o.common.resolved_threads();
    mc.grid = make_grid(o.grid_lo, o.grid_hi, o.grid_points);
    mc.noise_scale = o.noise_scale;
    mc.select_r = o.select_r;
    mc.r_max = o.r_max;
    if (o.regime == "ld") mc.regime = Regime::LD;
    if (o.regime == "hd") mc.regime = Regime::HD;

    McReport rep = monte_carlo(cfg, o.reps, mc);
    nonconverged_total += rep.nonconverged;

    char tag[64];
    std::snprintf(tag, sizeof(tag), "%dx%d", cell.n, cell.t);
    table << o.dgp_case << ',' << cell.n << ',' << cell.t << ',' << o.reps << ','
          << fmt17(rep.fnr_pct) << ',' << fmt17(rep.fpr_pct) << ',' << rep.nonconverged << '\n';

    json rj;
    rj["case"] = o.dgp_case;
    rj["n"] = cell.n;
    rj["t"] = cell.t;
    rj["reps"] = rep.reps;
    rj["p"] = rep.p;
    rj["p_star"] = rep.p_star;
    rj["fnr_pct"] = rep.fnr_pct;
    rj["fpr_pct"] = rep.fpr_pct;
    rj["missed_true"] = rep.missed_true;
    rj["false_positives"] = rep.false_positives;
    rj["nonconverged"] = rep.nonconverged;
    rj["support_violation_reps"] = rep.support_violation_reps;
    if (o.select_r) rj["selected_r"] = rep.selected_r;
    const fs::path rep_path = dir / (std::string("mc_report_") + tag + ".json");
    {
      std::ofstream out(rep_path);
      out << rj.dump(2) << '\n';
    }
    manifest.record(rep_path);

    const fs::path curves_path = dir / (std::string("mc_curves_") + tag + ".csv");
    {
      std::ofstream out(curves_path);
      out << "regressor,z,mean,lo,hi\n";
      for (const auto& c : rep.curves) {
        for (size_t k = 0; k < rep.grid.size(); ++k) {
          out << (c.regressor + 1) << ',' << fmt17(rep.grid[k]) << ',' << fmt17(c.mean[k])
              << ',' << fmt17(c.lo[k]) << ',' << fmt17(c.hi[k]) << '\n';
        }
      }
    }
    manifest.record(curves_path);

    if (o.emit_panel >= 0 && o.emit_panel < o.reps) {
      DgpConfig pc = cfg;
      pc.seed = cfg.seed + static_cast<std::uint64_t>(o.emit_panel);
      auto [panel, truth] = generate(pc, o.noise_scale);
      const fs::path pp = dir / (std::string("panel_") + tag + "_rep" +
                                 std::to_string(o.emit_panel) + ".csv");
      write_panel_csv(panel, pp.string());
      manifest.record(pp);
    }
  }
  table.close();
  manifest.record(dir / "fnr_fpr.csv");

  json cj;
  cj["case"] = o.dgp_case;
  cj["regime"] = o.regime;
  cj["reps"] = o.reps;
  cj["r_true"] = o.r_true;
  cj["select_r"] = o.select_r;
  cj["r_max"] = o.r_max;
  cj["grid_lo"] = o.grid_lo;
  cj["grid_hi"] = o.grid_hi;
  cj["grid_points"] = o.grid_points;
  cj["noise_scale"] = o.noise_scale;
  cj["m"] = o.m;
  cj["seed"] = o.common.seed;
  cj["threads"] = o.common.resolved_threads();
  json sizes = json::array();
  for (const Cell& c : cells) sizes.push_back({{"n", c.n}, {"t", c.t}});
  cj["cells"] = sizes;
  manifest.set_config(cj);
  manifest.write();

  if (nonconverged_total > 0 && !o.common.allow_nonconverged) return kExitNonconverged;
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitOpts {
  CommonOpts common;
  std::string panel_path;
  std::string r_spec = "auto";
  std::string nu_spec = "auto";
  std::string regime = "auto";
  int r_max = 6;
  int m = 0;
  double tol = 1e-6;
  int max_iter = 500;
  int n_starts = 3;
  double zero_floor = 1e-8;
  int nu_grid_size = 40;
  double nu_lo_factor = 1e-4;
  double nu_hi_factor = 1e1;
  bool standardize = false;
  double grid_lo = -1.0, grid_hi = 2.0;
  int grid_points = 63;
};

int cmd_fit(const FitOpts& o) {
  fs::path dir = prepare_out(o.common);
  RunManifest manifest(dir, "fit");

  PanelData raw = load_panel_csv(o.panel_path);
  json std_info = json::array();
  std::optional<PanelData> standardized;
  if (o.standardize) {
    const int n = raw.n_units(), t = raw.n_periods(), p = raw.n_regressors();
    std::vector<Eigen::MatrixXd> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = raw.x(i);
    for (int j = 0; j < p; ++j) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += xs[i].col(j).sum();
      mean /= n * t;
      double var = 0.0;
      for (int i = 0; i < n; ++i) var += (xs[i].col(j).array() - mean).square().sum();
      var /= n * t;
      const double sd = std::sqrt(var);
      if (sd > 0.0) {
        for (int i = 0; i < n; ++i) xs[i].col(j) = (xs[i].col(j).array() - mean) / sd;
      }
      std_info.push_back({{"regressor", raw.regressor_names()[j]}, {"mean", mean}, {"sd", sd}});
    }
    standardized.emplace(raw.y(), xs, raw.z(), raw.unit_ids(), raw.period_ids(),
                         raw.regressor_names());
  }
  const PanelData& data = standardized ? *standardized : raw;

  const Regime regime = parse_regime(o.regime, data);
  PipelineConfig pipe_cfg;
  pipe_cfg.sieve.m = o.m;
  pipe_cfg.fit.tol = o.tol;
  pipe_cfg.fit.max_iter = o.max_iter;
  pipe_cfg.fit.n_starts = o.n_starts;
  pipe_cfg.fit.seed = o.common.seed;
  pipe_cfg.fit.zero_floor = o.zero_floor;
  pipe_cfg.regime = regime;
  pipe_cfg.path.grid_size = o.nu_grid_size;
  pipe_cfg.path.lo_factor = o.nu_lo_factor;
  pipe_cfg.path.hi_factor = o.nu_hi_factor;
  const int m = pipe_cfg.sieve.resolve(data.n_units(), data.n_periods());

  int r = 0;
  json pic_json = json::array();
  if (o.r_spec == "auto") {
    auto [r_star, pic_table] = select_num_factors(data, o.r_max, pipe_cfg,
                                                  o.common.resolved_threads());
    r = r_star;
    std::ofstream out(dir / "pic_table.csv");
    out << "r,sigma2,pic,selected_count\n";
    for (const auto& rec : pic_table) {
      out << rec.r << ',' << fmt17(rec.sigma2) << ',' << fmt17(rec.pic) << ','
          << rec.selected_count << '\n';
      pic_json.push_back({{"r", rec.r},
                          {"sigma2", rec.sigma2},
                          {"pic", rec.pic},
                          {"selected_count", rec.selected_count}});
    }
    out.close();
    manifest.record(dir / "pic_table.csv");
  } else {
    r = std::stoi(o.r_spec);
    if (r < 0) throw CLI::ValidationError("--r", "must be >= 0 or 'auto'");
  }

  SelectionResult sel;
  double best_nu = 0.0;
  if (o.nu_spec == "auto") {
    PipelineResult pipe = run_selection_pipeline(data, r, pipe_cfg);
    sel = std::move(pipe.selection);
    best_nu = sel.best_nu;
    std::ofstream out(dir / "bic_table.csv");
    out << "nu,rss_norm,df,bic,converged\n";
    for (const auto& rec : sel.bic_table) {
      out << fmt17(rec.nu) << ',' << fmt17(rec.rss_norm) << ',' << rec.df << ','
          << fmt17(rec.bic) << ',' << (rec.converged ? 1 : 0) << '\n';
    }
    out.close();
    manifest.record(dir / "bic_table.csv");
  } else {
    const double nu = std::stod(o.nu_spec);
    if (nu < 0.0) throw CLI::ValidationError("--nu", "must be >= 0 or 'auto'");
    SieveDesign design(data, m);
    FitResult baseline =
        fit(design, r, Eigen::VectorXd::Zero(data.n_regressors()), pipe_cfg.fit);
    LambdaPath path = build_lambda_path(baseline, data.n_units(), data.n_periods(), regime,
                                        pipe_cfg.fit.zero_floor, pipe_cfg.path);
    path.nu_grid = {nu > 0.0 ? nu : 1e-300};
    sel = select_lambda(data, design, r, path, pipe_cfg.fit);
    best_nu = nu;
  }

  const FitResult& post = sel.post_fit;
  json fj = fit_to_json(post, m, r, sel.selected);
  fj["nu"] = best_nu;
  json lam = json::array();
  for (Eigen::Index j = 0; j < sel.best_lambda.size(); ++j) lam.push_back(sel.best_lambda[j]);
  fj["lambda"] = lam;
  fj["regime"] = regime == Regime::LD ? "ld" : "hd";
  fj["support_violations"] = sel.support_violations;
  fj["path_fit_converged"] = sel.fit.converged;
  if (!pic_json.empty()) fj["pic_table"] = pic_json;
  fj["config"] = {{"tol", o.tol},
                  {"max_iter", o.max_iter},
                  {"n_starts", o.n_starts},
                  {"seed", o.common.seed},
                  {"zero_floor", o.zero_floor},
                  {"standardize", o.standardize}};
  if (o.standardize) fj["standardization"] = std_info;
  {
    std::ofstream out(dir / "fit.json");
    out << fj.dump(2) << '\n';
  }
  manifest.record(dir / "fit.json");

  {
    std::ofstream out(dir / "coefficients.csv");
    out << "regressor,name,selected";
    for (int k = 0; k < m; ++k) out << ",c" << (k + 1);
    out << '\n';
    for (int j = 0; j < post.coef.n_rows(); ++j) {
      out << (j + 1) << ',' << data.regressor_names()[j] << ','
          << (sel.selected.count(j) ? 1 : 0);
      for (int k = 0; k < m; ++k) out << ',' << fmt17(post.coef.c(j, k));
      out << '\n';
    }
  }
  manifest.record(dir / "coefficients.csv");

  if (r > 0) {
    {
      std::ofstream out(dir / "factors.csv");
      out << "period";
      for (int k = 0; k < r; ++k) out << ",f" << (k + 1);
      out << '\n';
      for (int tt = 0; tt < data.n_periods(); ++tt) {
        out << data.period_ids()[tt];
        for (int k = 0; k < r; ++k) out << ',' << fmt17(post.factors.f(tt, k));
        out << '\n';
      }
    }
    manifest.record(dir / "factors.csv");
    {
      std::ofstream out(dir / "loadings.csv");
      out << "unit";
      for (int k = 0; k < r; ++k) out << ",g" << (k + 1);
      out << '\n';
      for (int i = 0; i < data.n_units(); ++i) {
        out << data.unit_ids()[i];
        for (int k = 0; k < r; ++k) out << ',' << fmt17(post.factors.gamma(i, k));
        out << '\n';
      }
    }
    manifest.record(dir / "loadings.csv");

    VarianceDecomposition dec = variance_decomposition(data, post);
    {
      std::ofstream out(dir / "variance_decomposition.csv");
      out << "factor,share,cumulative\n";
      for (size_t k = 0; k < dec.shares.size(); ++k) {
        out << (k + 1) << ',' << fmt17(dec.shares[k]) << ',' << fmt17(dec.cumulative[k]) << '\n';
      }
    }
    manifest.record(dir / "variance_decomposition.csv");
  }

  auto curves = coefficient_curves(post, make_grid(o.grid_lo, o.grid_hi, o.grid_points));
  write_curves_csv(dir / "curves.csv", curves, false);
  manifest.record(dir / "curves.csv");

  json cj;
  cj["panel"] = o.panel_path;
  cj["r"] = r;
  cj["r_spec"] = o.r_spec;
  cj["nu_spec"] = o.nu_spec;
  cj["nu"] = best_nu;
  cj["regime"] = regime == Regime::LD ? "ld" : "hd";
  cj["m"] = m;
  cj["tol"] = o.tol;
  cj["max_iter"] = o.max_iter;
  cj["n_starts"] = o.n_starts;
  cj["zero_floor"] = o.zero_floor;
  cj["nu_grid_size"] = o.nu_grid_size;
  cj["nu_lo_factor"] = o.nu_lo_factor;
  cj["nu_hi_factor"] = o.nu_hi_factor;
  cj["standardize"] = o.standardize;
  cj["seed"] = o.common.seed;
  manifest.set_config(cj);
  manifest.write();

  if (!(post.converged && sel.fit.converged) && !o.common.allow_nonconverged) {
    return kExitNonconverged;
  }
  return 0;
}

// ------------------------------------------------------------------- bands

struct BandsOpts {
  CommonOpts common;
  std::string panel_path;
  std::string fit_path;
  int b_reps = 200;
  double level = 0.95;
  bool unit_block = false;
  double grid_lo = -1.0, grid_hi = 2.0;
  int grid_points = 63;
  double tol = 1e-6;
  int max_iter = 500;
  int n_starts = 1;
};

int cmd_bands(const BandsOpts& o) {
  if (!(o.level > 0.0 && o.level < 1.0)) {
    throw CLI::ValidationError("--level", "must lie strictly between 0 and 1");
  }
  if (o.b_reps < 1) throw CLI::ValidationError("--b", "need at least one replication");
  fs::path dir = prepare_out(o.common);
  RunManifest manifest(dir, "bands");

  PanelData data = load_panel_csv(o.panel_path);
  json fj;
  {
    std::ifstream in(o.fit_path);
    if (!in) throw std::runtime_error("cannot open fit artifact: " + o.fit_path);
    in >> fj;
  }

  FitResult post;
  post.coef.c = matrix_from_json(fj.at("coefficients"));
  for (int j : fj.at("zero_rows").get<std::vector<int>>()) post.coef.zero_rows.insert(j);
  post.factors.f = matrix_from_json(fj.at("factors"));
  post.factors.gamma = matrix_from_json(fj.at("loadings"));
  post.rss = fj.at("rss").get<double>();
  post.objective = fj.at("objective").get<double>();
  post.converged = fj.at("converged").get<bool>();
  const int r = fj.at("r").get<int>();

  FitConfig refit;
  refit.tol = o.tol;
  refit.max_iter = o.max_iter;
  refit.n_starts = o.n_starts;
  refit.seed = o.common.seed;

  BootstrapOptions opts;
  opts.unit_block = o.unit_block;
  opts.threads = o.common.resolved_threads();
  BootstrapDiagnostics diag;
  auto bands = bootstrap_bands(data, post, o.b_reps, make_grid(o.grid_lo, o.grid_hi, o.grid_points),
                               o.level, o.common.seed, refit, opts, &diag);
  write_curves_csv(dir / "bands.csv", bands, true);
  manifest.record(dir / "bands.csv");

  json cj;
  cj["panel"] = o.panel_path;
  cj["fit"] = o.fit_path;
  cj["b"] = o.b_reps;
  cj["level"] = o.level;
  cj["unit_block"] = o.unit_block;
  cj["grid_lo"] = o.grid_lo;
  cj["grid_hi"] = o.grid_hi;
  cj["grid_points"] = o.grid_points;
  cj["seed"] = o.common.seed;
  cj["r"] = r;
  cj["replications_converged"] = diag.converged;
  cj["replications_total"] = diag.total;
  manifest.set_config(cj);
  manifest.write();

  if (diag.converged < diag.total && !o.common.allow_nonconverged) return kExitNonconverged;
  return 0;
}

}  // namespace

// Expands `--config FILE` (flat key=value lines, '#' comments) into option
// tokens placed directly after the subcommand, so explicit flags override the
// file under the take-last policy.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> expanded;
  std::vector<std::string> from_file;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      std::ifstream in(args[i + 1]);
      if (!in) throw std::runtime_error("cannot open config file: " + args[i + 1]);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
          throw std::runtime_error("config file line is not key=value: " + line);
        }
        from_file.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
      }
      ++i;  // skip the file name
      continue;
    }
    expanded.push_back(args[i]);
  }
  // config tokens go right after the subcommand so explicit flags win
  const size_t pos = expanded.empty() ? 0 : 1;
  expanded.insert(expanded.begin() + std::min(pos, expanded.size()), from_file.begin(),
                  from_file.end());
  return expanded;
}

int main(int argc, char** argv) {
  CLI::App app{"Penalized sieve estimation of varying-coefficient panels with a factor error structure"};
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Draw one panel from the simulation design");
  add_common(sim_cmd, &sim.common);
  sim_cmd->add_option("--case", sim.dgp_case, "ld or hd")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "Units")->capture_default_str();
  sim_cmd->add_option("--t", sim.t, "Periods")->capture_default_str();
  sim_cmd->add_option("--r-true", sim.r_true, "True factor count")->capture_default_str();
  sim_cmd->add_option("--ar-coef", sim.ar_coef, "AR(1) coefficient")->capture_default_str();
  sim_cmd->add_option("--loading-mean", sim.loading_mean, "Mean of the loadings")
      ->capture_default_str();
  sim_cmd->add_option("--cross-corr", sim.cross_corr, "Toeplitz base of the innovation covariance")
      ->capture_default_str();
  sim_cmd->add_option("--burn-in", sim.burn_in, "AR burn-in length")->capture_default_str();
  sim_cmd->add_option("--noise-scale", sim.noise_scale, "Idiosyncratic noise scale")
      ->capture_default_str();

  McOpts mc;
  CLI::App* mc_cmd = app.add_subcommand("mc", "Monte Carlo study of selection and recovery");
  add_common(mc_cmd, &mc.common);
  mc_cmd->add_option("--case", mc.dgp_case, "ld or hd")->capture_default_str();
  mc_cmd->add_option("--regime", mc.regime, "BIC regime: ld, hd or auto (match the case)")
      ->capture_default_str();
  mc_cmd->add_option("--grid-sizes", mc.grid_sizes,
                     "Square panel sizes, e.g. 40,80 (overrides --n/--t)")
      ->delimiter(',');
  mc_cmd->add_option("--n", mc.n, "Units")->capture_default_str();
  mc_cmd->add_option("--t", mc.t, "Periods")->capture_default_str();
  mc_cmd->add_option("--reps", mc.reps, "Replications")->check(CLI::PositiveNumber)
      ->capture_default_str();
  mc_cmd->add_option("--r-true", mc.r_true, "True factor count")->capture_default_str();
  mc_cmd->add_flag("--select-r", mc.select_r, "Select r per replication by PIC");
  mc_cmd->add_option("--r-max", mc.r_max, "Largest r for PIC")->capture_default_str();
  mc_cmd->add_option("--grid-lo", mc.grid_lo, "Curve grid start")->capture_default_str();
  mc_cmd->add_option("--grid-hi", mc.grid_hi, "Curve grid end")->capture_default_str();
  mc_cmd->add_option("--grid-points", mc.grid_points, "Curve grid points")->capture_default_str();
  mc_cmd->add_option("--noise-scale", mc.noise_scale, "Idiosyncratic noise scale")
      ->capture_default_str();
  mc_cmd->add_option("--m", mc.m, "Sieve truncation (0 = size rule)")->capture_default_str();
  mc_cmd->add_option("--emit-panel", mc.emit_panel,
                     "Also dump the panel of this replication index")
      ->capture_default_str();

  FitOpts fo;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Tune, select and fit on a panel CSV");
  add_common(fit_cmd, &fo.common);
  fit_cmd->add_option("--panel", fo.panel_path, "Panel CSV path")->required();
  fit_cmd->add_option("--r", fo.r_spec, "Factor count or 'auto' (PIC)")->capture_default_str();
  fit_cmd->add_option("--r-max", fo.r_max, "Largest r for PIC")->capture_default_str();
  fit_cmd->add_option("--nu", fo.nu_spec, "Penalty scale or 'auto' (BIC path)")
      ->capture_default_str();
  fit_cmd->add_option("--regime", fo.regime, "BIC regime: ld, hd or auto (p > sqrt(NT))")
      ->capture_default_str();
  fit_cmd->add_option("--m", fo.m, "Sieve truncation (0 = size rule)")->capture_default_str();
  fit_cmd->add_option("--tol", fo.tol, "Convergence tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fo.max_iter, "Iteration cap")->capture_default_str();
  fit_cmd->add_option("--starts", fo.n_starts, "Random multistarts")->capture_default_str();
  fit_cmd->add_option("--zero-floor", fo.zero_floor, "Row-freeze threshold")
      ->capture_default_str();
  fit_cmd->add_option("--nu-grid-size", fo.nu_grid_size, "Path grid points")
      ->capture_default_str();
  fit_cmd->add_option("--nu-lo-factor", fo.nu_lo_factor, "Path lower factor")
      ->capture_default_str();
  fit_cmd->add_option("--nu-hi-factor", fo.nu_hi_factor, "Path upper factor")
      ->capture_default_str();
  fit_cmd->add_flag("--standardize", fo.standardize,
                    "Z-score regressor columns before fitting (recorded in the manifest)");
  fit_cmd->add_option("--grid-lo", fo.grid_lo, "Curve grid start")->capture_default_str();
  fit_cmd->add_option("--grid-hi", fo.grid_hi, "Curve grid end")->capture_default_str();
  fit_cmd->add_option("--grid-points", fo.grid_points, "Curve grid points")
      ->capture_default_str();

  BandsOpts bo;
  CLI::App* bands_cmd = app.add_subcommand("bands", "Bootstrap confidence bands around a fit");
  add_common(bands_cmd, &bo.common);
  bands_cmd->add_option("--panel", bo.panel_path, "Panel CSV path")->required();
  bands_cmd->add_option("--fit", bo.fit_path, "fit.json from the fit command")->required();
  bands_cmd->add_option("--b", bo.b_reps, "Bootstrap replications")->capture_default_str();
  bands_cmd->add_option("--level", bo.level, "Band level in (0,1)")->capture_default_str();
  bands_cmd->add_flag("--block", bo.unit_block, "Resample residual rows per unit");
  bands_cmd->add_option("--grid-lo", bo.grid_lo, "Curve grid start")->capture_default_str();
  bands_cmd->add_option("--grid-hi", bo.grid_hi, "Curve grid end")->capture_default_str();
  bands_cmd->add_option("--grid-points", bo.grid_points, "Curve grid points")
      ->capture_default_str();
  bands_cmd->add_option("--tol", bo.tol, "Refit tolerance")->capture_default_str();
  bands_cmd->add_option("--max-iter", bo.max_iter, "Refit iteration cap")->capture_default_str();
  bands_cmd->add_option("--starts", bo.n_starts, "Refit multistarts")->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  try {
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (mc_cmd->parsed()) return cmd_mc(mc);
    if (fit_cmd->parsed()) return cmd_fit(fo);
    if (bands_cmd->parsed()) return cmd_bands(bo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
