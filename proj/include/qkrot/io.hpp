#pragma once

// File formats: rotor spec JSON, population / energy CSV, result and fit
// JSON, report CSV. CSV numbers use the shortest form that reads back to
// the same double.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qkrot/analysis.hpp"
#include "qkrot/ensemble.hpp"
#include "qkrot/errors.hpp"
#include "qkrot/rotor_basis.hpp"

namespace qkrot {

// Shortest %.Ng that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    if (digits == 17 || std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline nlohmann::json spec_to_json(const RotorSpec& spec) {
  nlohmann::json j = {{"revival_time_ps", spec.revival_time_ps},
                      {"parity", std::string(to_string(spec.parity))},
                      {"centrifugal_const_per_cm", spec.centrifugal_const_per_cm},
                      {"j_max", spec.j_max}};
  j["polarizability_anisotropy_A3"] =
      spec.polarizability_anisotropy_A3 ? nlohmann::json(*spec.polarizability_anisotropy_A3) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline nlohmann::json fit_to_json(const FitResult& f) {
  return {{"model", std::string(to_string(f.model))},
          {"J_c", f.center},
          {"width", f.width},
          {"amplitude", f.amplitude},
          {"rms_log_residual", f.rms_log_residual},
          {"window", {{"J_min", f.window.j_min}, {"J_max", f.window.j_max}, {"step", f.window.step}}},
          {"points", f.points},
          {"floored", f.floored},
          {"std_errors",
           {{"J_c", number_or_null(f.se_center)},
            {"width", number_or_null(f.se_width)},
            {"amplitude", number_or_null(f.se_amplitude)}}}};
}

inline nlohmann::json classification_to_json(const ShapeClassification& c) {
  return {{"label", std::string(to_string(c.label))},
          {"score", c.score},
          {"exponential", fit_to_json(c.exponential)},
          {"gaussian", fit_to_json(c.gaussian)}};
}

// kick,P_J0,P_J1,...
inline void write_populations_csv(std::ostream& os, const Eigen::MatrixXd& p_of_J_after_kick) {
  os << "kick";
  for (Eigen::Index J = 0; J < p_of_J_after_kick.cols(); ++J) os << ",P_J" << J;
  os << '\n';
  for (Eigen::Index n = 0; n < p_of_J_after_kick.rows(); ++n) {
    os << n;
    for (Eigen::Index J = 0; J < p_of_J_after_kick.cols(); ++J) os << ',' << format_double(p_of_J_after_kick(n, J));
    os << '\n';
  }
}

inline Eigen::MatrixXd read_populations_csv(std::istream& is) {
  std::string line;
  // leading '#' lines carry run metadata
  do {
    if (!std::getline(is, line)) throw ConfigError("populations CSV is empty");
  } while (!line.empty() && line[0] == '#');
  std::size_t cols = 0;
  {
    std::stringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "kick") throw ConfigError("populations CSV: first column must be 'kick'");
    while (std::getline(hs, cell, ',')) {
      if (cell != "P_J" + std::to_string(cols)) throw ConfigError("populations CSV: unexpected column '" + cell + "'");
      ++cols;
    }
  }
  if (cols == 0) throw ConfigError("populations CSV has no P_J columns");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("populations CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != cols)
      throw ConfigError("populations CSV line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("populations CSV has no data rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// kick,E_hcB,E_per_cm
inline void write_energy_csv(std::ostream& os, const std::vector<EnergyPoint>& curve) {
  os << "kick,E_hcB,E_per_cm\n";
  for (const auto& e : curve) os << e.kick << ',' << format_double(e.hcB) << ',' << format_double(e.per_cm) << '\n';
}

inline nlohmann::json result_to_json(const EnsembleResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index n = 0; n < r.p_of_J_after_kick.rows(); ++n) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index J = 0; J < r.p_of_J_after_kick.cols(); ++J) row.push_back(r.p_of_J_after_kick(n, J));
    rows.push_back(std::move(row));
  }
  nlohmann::json j = {{"spec", spec_to_json(r.spec)},
                      {"mode", {{"kind", r.mode.name()}, {"n_sub", r.mode.n_sub}}},
                      {"member_count", r.member_count},
                      {"trajectories", r.trajectories},
                      {"train_set", train_set_to_json(r.train_set, r.spec.revival_time_ps)},
                      {"p_of_J_after_kick", rows}};
  j["temperature_K"] = r.temperature_K ? nlohmann::json(*r.temperature_K) : nlohmann::json(nullptr);
  j["thermal_cutoff"] = r.thermal_cutoff ? nlohmann::json(*r.thermal_cutoff) : nlohmann::json(nullptr);
  return j;
}

struct ReportRow {
  std::string protocol;
  double P;
  std::string label;  // classification of the run
  FitResult fit;
};

// protocol,P,model,J_c,width,residual,label
inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "protocol,P,model,J_c,width,residual,label\n";
  for (const auto& r : rows) {
    os << r.protocol << ',' << format_double(r.P) << ',' << to_string(r.fit.model) << ',' << format_double(r.fit.center)
       << ',' << format_double(r.fit.width) << ',' << format_double(r.fit.rms_log_residual) << ',' << r.label << '\n';
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw ConfigError("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace qkrot
