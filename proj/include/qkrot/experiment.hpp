#pragma once

// Config -> pulse trains -> ensemble -> analysis -> files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkrot/analysis.hpp"
#include "qkrot/config.hpp"
#include "qkrot/ensemble.hpp"
#include "qkrot/errors.hpp"
#include "qkrot/io.hpp"
#include "qkrot/pulse_train.hpp"
#include "qkrot/units.hpp"

namespace qkrot {

inline constexpr const char* result_format_tag = "qkrot-result-1";
inline constexpr const char* output_dir_env = "QKROT_OUTPUT_DIR";
inline constexpr const char* default_output_dir = "qkrot-out";

inline TrainSet build_train_set(const ProtocolSpec& p, const RotorSpec& spec, std::uint64_t seed,
                                double amplitude_noise_frac = 0.0) {
  const double trev_fs = spec.revival_time_ps * 1000.0;
  const double fwhm = p.fwhm_fs / trev_fs;
  TrainSet set;
  if (p.design == ProtocolDesign::Periodic) {
    set = periodic_set(p.n_pulses, p.T_lo_over_Trev, p.T_hi_over_Trev, p.count, p.P, fwhm);
  } else {
    std::optional<ResonanceAvoidance> avoid;
    if (!p.avoid_J.empty()) avoid = ResonanceAvoidance{p.avoid_J, p.min_distance_fs / trev_fs};
    set = jittered_set(p.count, p.n_pulses, p.mean_T_over_Trev, p.sigma_frac, seed, avoid, p.P, fwhm,
                       spec.revival_time_ps);
  }
  if (amplitude_noise_frac > 0.0) {
    for (std::size_t i = 0; i < set.trains.size(); ++i)
      set.trains[i] = amplitude_noise(set.trains[i], amplitude_noise_frac, seed + i);
    set.parameters["amplitude_noise_frac"] = amplitude_noise_frac;
    set.parameters["amplitude_noise_seed"] = seed;
  }
  set.validate();
  return set;
}

struct RunOutput {
  ProtocolSpec protocol;
  EnsembleResult result;
  std::vector<EnergyPoint> energy;
  std::optional<ShapeClassification> shape;
  std::optional<std::string> fit_error;
};

inline RunOutput run_protocol(const ExperimentConfig& cfg, const ProtocolSpec& protocol,
                              PropagatorCache* cache = nullptr) {
  const RotorSpec spec = cfg.rotor();
  const TrainSet set = build_train_set(protocol, spec, cfg.seed, cfg.simulation.amplitude_noise_frac);
  EnsembleOptions opt;
  opt.mode = cfg.simulation.mode;
  opt.workers = cfg.simulation.workers;
  opt.use_m_symmetry = cfg.simulation.use_m_symmetry;
  opt.leakage_threshold = cfg.simulation.leakage_threshold;
  RunOutput out{protocol, run_ensemble(spec, cfg.simulation.temperature_K, cfg.simulation.thermal_cutoff, set, opt, cache),
                {}, std::nullopt, std::nullopt};
  out.energy = absorbed_energy_curve(out.result, spec);
  if (cfg.analysis.fit) {
    try {
      const auto p = out.result.final_distribution();
      const FitWindow w = fit_window(p, spec, cfg.analysis.fit_options);
      out.shape = classify_shape(p, w, cfg.analysis.fit_options);
    } catch (const FitError& e) {
      out.fit_error = e.what();
    }
  }
  return out;
}

// The fit a one-line summary reports: the classified model, or the one with
// the smaller residual when the classification is ambiguous.
inline const FitResult& headline_fit(const ShapeClassification& c) {
  if (c.label == ShapeLabel::Exponential) return c.exponential;
  if (c.label == ShapeLabel::Gaussian) return c.gaussian;
  return c.exponential.rms_log_residual <= c.gaussian.rms_log_residual ? c.exponential : c.gaussian;
}

inline std::string resolve_output_dir(const ExperimentConfig& cfg) {
  if (cfg.output.directory) return *cfg.output.directory;
  if (const char* env = std::getenv(output_dir_env); env && *env) return env;
  return default_output_dir;
}

namespace detail {

inline nlohmann::json seeds_json(const ExperimentConfig& cfg, const TrainSet& set) {
  nlohmann::json train_seeds = nlohmann::json::array();
  for (const auto& t : set.trains) train_seeds.push_back(t.seed ? nlohmann::json(*t.seed) : nlohmann::json(nullptr));
  nlohmann::json j = {{"seed", cfg.seed}, {"train_seeds", train_seeds}};
  j["set_attempt"] = set.parameters.contains("set_attempt") ? set.parameters["set_attempt"] : nlohmann::json(nullptr);
  return j;
}

inline std::string csv_comment(const ExperimentConfig& cfg, const std::string& hash, const std::string& run) {
  return "# qkrot run=" + run + " config_hash=" + hash + " seed=" + std::to_string(cfg.seed) + "\n";
}

}  // namespace detail

/// Writes every output file of a simulate run; returns the written paths.
///   <run>.populations.csv  <run>.energy.csv  <run>.result.json  <run>.fit.json
///   report.csv, plus energy_curves.csv when there is more than one run.
inline std::vector<std::string> write_outputs(const ExperimentConfig& cfg, const std::vector<RunOutput>& runs,
                                              const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw ConfigError("cannot create output directory '" + directory + "': " + ec.message());
  const std::string hash = config_hash(cfg);
  const nlohmann::json embedded = config_to_json(cfg);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(directory) / name).string();
    write_text_file(path, content);
    written.push_back(path);
  };

  std::vector<ReportRow> report;
  for (const auto& run : runs) {
    const std::string& name = run.protocol.name;
    const std::string comment = detail::csv_comment(cfg, hash, name);
    if (cfg.output.csv) {
      std::ostringstream pop, en;
      pop << comment;
      write_populations_csv(pop, run.result.p_of_J_after_kick);
      put(name + ".populations.csv", pop.str());
      en << comment;
      write_energy_csv(en, run.energy);
      put(name + ".energy.csv", en.str());
    }
    if (cfg.output.json) {
      nlohmann::json res = result_to_json(run.result);
      res["format"] = result_format_tag;
      res["run"] = name;
      res["protocol"] = protocol_to_json(run.protocol);
      res["config_hash"] = hash;
      res["config"] = embedded;
      res["seeds"] = detail::seeds_json(cfg, run.result.train_set);
      put(name + ".result.json", res.dump(1) + "\n");

      nlohmann::json fit = {{"run", name}, {"config_hash", hash}, {"seeds", detail::seeds_json(cfg, run.result.train_set)}};
      if (run.shape) {
        fit["classification"] = classification_to_json(*run.shape);
        fit["fit"] = fit_to_json(headline_fit(*run.shape));
      } else if (run.fit_error) {
        fit["error"] = *run.fit_error;
      } else {
        fit["fit"] = nullptr;
      }
      put(name + ".fit.json", fit.dump(1) + "\n");
    }
    if (run.shape) {
      const std::string label(to_string(run.shape->label));
      report.push_back({name, run.protocol.P, label, run.shape->exponential});
      report.push_back({name, run.protocol.P, label, run.shape->gaussian});
    }
  }
  if (cfg.output.csv) {
    std::ostringstream rep;
    rep << detail::csv_comment(cfg, hash, cfg.preset.value_or(runs.size() == 1 ? runs.front().protocol.name : "custom"));
    write_report_csv(rep, report);
    put("report.csv", rep.str());
    if (runs.size() > 1) {
      std::ostringstream ec_csv;
      ec_csv << detail::csv_comment(cfg, hash, cfg.preset.value_or("custom")) << "kick";
      for (const auto& run : runs) ec_csv << ',' << run.protocol.name;
      ec_csv << '\n';
      for (std::size_t n = 0; n < runs.front().energy.size(); ++n) {
        ec_csv << n;
        for (const auto& run : runs) ec_csv << ',' << format_double(n < run.energy.size() ? run.energy[n].hcB : NAN);
        ec_csv << '\n';
      }
      put("energy_curves.csv", ec_csv.str());
    }
  }
  return written;
}

/// Reads a config file; a result JSON written by simulate is accepted too
/// and yields the config embedded in it.
inline nlohmann::json load_config_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("format") && j["format"] == result_format_tag) {
    if (!j.contains("config")) throw ConfigError("'" + path + "' is a result file without an embedded config");
    return j["config"];
  }
  return j;
}

enum class SweepAxis { P, MeanT };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "P") return SweepAxis::P;
  if (s == "mean_T") return SweepAxis::MeanT;
  throw ConfigError("sweep axis must be 'P' or 'mean_T', got '" + s + "'");
}

/// The protocol with one grid value applied. mean_T moves a periodic interval
/// so that its midpoint is the value (width kept) and sets a jittered set's mean.
inline ProtocolSpec with_axis_value(ProtocolSpec p, SweepAxis axis, double value) {
  if (!(value > 0.0) && !(axis == SweepAxis::P && value == 0.0))
    throw ConfigError("sweep value must be > 0 (P may be 0)");
  if (axis == SweepAxis::P) {
    p.P = value;
  } else if (p.design == ProtocolDesign::Periodic) {
    const double half = 0.5 * (p.T_hi_over_Trev - p.T_lo_over_Trev);
    if (value - half <= 0.0) throw ConfigError("sweep: mean_T too small for the periodic interval width");
    p.T_lo_over_Trev = value - half;
    p.T_hi_over_Trev = value + half;
  } else {
    p.mean_T_over_Trev = value;
  }
  return p;
}

struct SweepRow {
  double value;
  RunOutput run;
};

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no grid values");
  const auto runs = expand_runs(cfg);
  if (runs.size() != 1) throw ConfigError("sweep: the config must describe a single protocol run");
  PropagatorCache cache(cfg.rotor());
  std::vector<SweepRow> rows;
  for (double v : values) rows.push_back({v, run_protocol(cfg, with_axis_value(runs.front(), axis, v), &cache)});
  return rows;
}

// axis value, label, score, model, J_c, width, residual, final energy
inline void write_sweep_csv(std::ostream& os, const ExperimentConfig& cfg, SweepAxis axis,
                            const std::vector<SweepRow>& rows) {
  os << detail::csv_comment(cfg, config_hash(cfg), rows.empty() ? "" : rows.front().run.protocol.name);
  os << (axis == SweepAxis::P ? "P" : "mean_T_over_Trev") << ",label,score,model,J_c,width,residual,E_final_hcB\n";
  for (const auto& r : rows) {
    os << format_double(r.value) << ',';
    if (r.run.shape) {
      const FitResult& f = headline_fit(*r.run.shape);
      os << to_string(r.run.shape->label) << ',' << format_double(r.run.shape->score) << ',' << to_string(f.model) << ','
         << format_double(f.center) << ',' << format_double(f.width) << ',' << format_double(f.rms_log_residual);
    } else {
      os << "fit-error,,,,,";
    }
    os << ',' << format_double(r.run.energy.back().hcB) << '\n';
  }
}

}  // namespace qkrot
