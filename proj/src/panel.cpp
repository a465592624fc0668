#include "vcpanel/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vcpanel {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  *out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(*out);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Sort period labels numerically when they all parse as numbers,
// lexicographically otherwise.
std::vector<std::string> sorted_periods(const std::vector<std::string>& labels) {
  std::vector<std::string> out = labels;
  bool numeric = true;
  std::vector<double> vals(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!parse_double(labels[i], &vals[i])) {
      numeric = false;
      break;
    }
  }
  if (numeric) {
    std::vector<size_t> idx(labels.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
    for (size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  } else {
    std::sort(out.begin(), out.end());
  }
  return out;
}

}  // namespace

PanelData::PanelData(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x, Eigen::MatrixXd z,
                     std::vector<std::string> unit_ids, std::vector<std::string> period_ids,
                     std::vector<std::string> regressor_names)
    : y_(std::move(y)),
      x_(std::move(x)),
      z_(std::move(z)),
      unit_ids_(std::move(unit_ids)),
      period_ids_(std::move(period_ids)),
      regressor_names_(std::move(regressor_names)) {
  const int n = static_cast<int>(y_.rows());
  const int t = static_cast<int>(y_.cols());
  require(n >= 2, "panel: need at least 2 units");
  require(t >= 2, "panel: need at least 2 periods");
  require(static_cast<int>(x_.size()) == n, "panel: x must hold one T x p matrix per unit");
  const int p = static_cast<int>(x_.front().cols());
  require(p >= 1, "panel: need at least one regressor");
  for (const auto& xi : x_) {
    require(xi.rows() == t && xi.cols() == p, "panel: ragged regressor block");
    require(xi.allFinite(), "panel: non-finite regressor value");
  }
  require(z_.rows() == n && z_.cols() == t, "panel: z must be N x T");
  require(y_.allFinite(), "panel: non-finite response value");
  require(z_.allFinite(), "panel: non-finite index value");
  require(static_cast<int>(unit_ids_.size()) == n, "panel: unit label count mismatch");
  require(static_cast<int>(period_ids_.size()) == t, "panel: period label count mismatch");
  require(static_cast<int>(regressor_names_.size()) == p, "panel: regressor name count mismatch");
}

PanelData PanelData::restrict_regressors(const std::set<int>& keep) const {
  require(!keep.empty(), "panel: cannot restrict to an empty regressor set");
  const int p = n_regressors();
  for (int j : keep) require(j >= 0 && j < p, "panel: regressor index out of range");
  std::vector<Eigen::MatrixXd> xs(x_.size());
  std::vector<std::string> names;
  names.reserve(keep.size());
  for (int j : keep) names.push_back(regressor_names_[j]);
  for (size_t i = 0; i < x_.size(); ++i) {
    Eigen::MatrixXd xi(n_periods(), static_cast<int>(keep.size()));
    int c = 0;
    for (int j : keep) xi.col(c++) = x_[i].col(j);
    xs[i] = std::move(xi);
  }
  return PanelData(y_, std::move(xs), z_, unit_ids_, period_ids_, std::move(names));
}

PanelData PanelData::with_response(Eigen::MatrixXd new_y) const {
  return PanelData(std::move(new_y), x_, z_, unit_ids_, period_ids_, regressor_names_);
}

PanelData load_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open panel CSV: " + path);

  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    header = split_csv_line(line);
    break;
  }
  require(header.size() >= 5, "panel CSV: header must be unit,period,y,z,<regressors...>");
  require(header[0] == "unit" && header[1] == "period" && header[2] == "y" && header[3] == "z",
          "panel CSV: header must start with unit,period,y,z");
  std::vector<std::string> reg_names(header.begin() + 4, header.end());
  const int p = static_cast<int>(reg_names.size());

  struct Row {
    std::string unit, period;
    double y, z;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  std::vector<std::string> unit_order;            // first-appearance order
  std::map<std::string, int> unit_index;
  std::vector<std::string> period_labels;
  std::map<std::string, int> period_seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("panel CSV row " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    Row r;
    r.unit = fields[0];
    r.period = fields[1];
    auto num = [&](const std::string& s, const char* what) {
      double v;
      if (!parse_double(s, &v)) {
        throw std::runtime_error("panel CSV row " + std::to_string(line_no) +
                                 ": non-numeric or non-finite " + what + " value '" + s + "'");
      }
      return v;
    };
    r.y = num(fields[2], "y");
    r.z = num(fields[3], "z");
    r.x.resize(p);
    for (int j = 0; j < p; ++j) r.x[j] = num(fields[4 + j], reg_names[j].c_str());
    if (unit_index.find(r.unit) == unit_index.end()) {
      unit_index[r.unit] = static_cast<int>(unit_order.size());
      unit_order.push_back(r.unit);
    }
    if (period_seen.find(r.period) == period_seen.end()) {
      period_seen[r.period] = 1;
      period_labels.push_back(r.period);
    }
    rows.push_back(std::move(r));
  }
  require(!rows.empty(), "panel CSV: no data rows");

  std::vector<std::string> periods = sorted_periods(period_labels);
  std::map<std::string, int> period_index;
  for (size_t j = 0; j < periods.size(); ++j) period_index[periods[j]] = static_cast<int>(j);

  const int n = static_cast<int>(unit_order.size());
  const int t = static_cast<int>(periods.size());
  Eigen::MatrixXd y(n, t), z(n, t);
  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, p));
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(t, false));
  for (const auto& r : rows) {
    int i = unit_index[r.unit];
    int j = period_index[r.period];
    if (seen[i][j]) {
      throw std::runtime_error("panel CSV: duplicate cell (" + r.unit + ", " + r.period + ")");
    }
    seen[i][j] = true;
    y(i, j) = r.y;
    z(i, j) = r.z;
    for (int k = 0; k < p; ++k) x[i](j, k) = r.x[k];
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < t; ++j) {
      if (!seen[i][j]) {
        throw std::runtime_error("panel CSV: unbalanced panel, missing (" + unit_order[i] + ", " +
                                 periods[j] + ")");
      }
    }
  }
  return PanelData(std::move(y), std::move(x), std::move(z), std::move(unit_order),
                   std::move(periods), std::move(reg_names));
}

void write_panel_csv(const PanelData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "unit,period,y,z";
  for (const auto& name : data.regressor_names()) out << ',' << name;
  out << '\n';
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int i = 0; i < data.n_units(); ++i) {
    for (int tt = 0; tt < data.n_periods(); ++tt) {
      out << data.unit_ids()[i] << ',' << data.period_ids()[tt] << ',' << fmt(data.y()(i, tt))
          << ',' << fmt(data.z()(i, tt));
      for (int j = 0; j < data.n_regressors(); ++j) out << ',' << fmt(data.x(i)(tt, j));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace vcpanel
