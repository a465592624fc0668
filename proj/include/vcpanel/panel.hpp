#pragma once

#include <Eigen/Core>
#include <set>
#include <string>
#include <vector>

namespace vcpanel {

// Balanced N x T panel: response y_it, p regressors x_it, scalar index z_it.
// Immutable after construction; the constructor enforces balance, finiteness
// and the minimal sizes N >= 2, T >= 2, p >= 1.
class PanelData {
 public:
  PanelData(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x, Eigen::MatrixXd z,
            std::vector<std::string> unit_ids, std::vector<std::string> period_ids,
            std::vector<std::string> regressor_names);

  int n_units() const { return static_cast<int>(y_.rows()); }
  int n_periods() const { return static_cast<int>(y_.cols()); }
  int n_regressors() const { return static_cast<int>(x_.front().cols()); }

  const Eigen::MatrixXd& y() const { return y_; }          // N x T
  const Eigen::MatrixXd& x(int unit) const { return x_[unit]; }  // T x p
  const Eigen::MatrixXd& z() const { return z_; }          // N x T

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::string>& period_ids() const { return period_ids_; }
  const std::vector<std::string>& regressor_names() const { return regressor_names_; }

  // Copy with the regressor set restricted to `keep` (0-based, ascending order).
  PanelData restrict_regressors(const std::set<int>& keep) const;

  // Copy with a replaced response (bootstrap resamples).
  PanelData with_response(Eigen::MatrixXd new_y) const;

 private:
  Eigen::MatrixXd y_;
  std::vector<Eigen::MatrixXd> x_;
  Eigen::MatrixXd z_;
  std::vector<std::string> unit_ids_;
  std::vector<std::string> period_ids_;
  std::vector<std::string> regressor_names_;
};

// CSV schema: header `unit,period,y,z,<regressor names...>`, one row per
// (unit, period) cell, `#` starts a comment line, `.` decimal separator.
PanelData load_panel_csv(const std::string& path);

// Writes the exact schema accepted by load_panel_csv, floats at 17
// significant digits.
void write_panel_csv(const PanelData& data, const std::string& path);

}  // namespace vcpanel
