// qkrot: command-line front end.
//
//   qkrot resonance-map --jmax 13 --t 0.2:0.45
//   qkrot simulate configs/fig3-1a.json [--output-dir DIR] [--set simulation.mode=delta]
//   qkrot sweep configs/fig3-1a.json --axis P --values 4,6,8
//   qkrot fit out/fig3-1a.populations.csv
//
// Exit codes: 0 ok, 2 bad config or usage, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkrot/qkrot.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;
constexpr double shaper_window_ps = 50.0;

struct Overrides {
  std::string output_dir;
  int workers = -1;
  std::string mode;
  long long seed = -1;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--output-dir", output_dir, "Output directory (default: config, then $QKROT_OUTPUT_DIR, then ./qkrot-out)");
    cmd->add_option("--workers", workers, "Worker threads, 0 = all cores")->check(CLI::Range(0, 4096));
    cmd->add_option("--mode", mode, "Kick mode override")->check(CLI::IsMember({"delta", "finite"}));
    cmd->add_option("--seed", seed, "Seed override")->check(CLI::NonNegativeNumber);
    cmd->add_option("--set", sets, "Config override KEY=VALUE (dotted key, JSON value), repeatable");
  }

  qkrot::ExperimentConfig load(const std::string& path) const {
    nlohmann::json raw = qkrot::load_config_json(path);
    if (!raw.is_object()) throw qkrot::ConfigError("config: top level must be a JSON object");
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw qkrot::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      qkrot::apply_override(raw, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!mode.empty()) qkrot::apply_override(raw, "simulation.mode", "\"" + mode + "\"");
    if (workers >= 0) qkrot::apply_override(raw, "simulation.workers", std::to_string(workers));
    if (seed >= 0) qkrot::apply_override(raw, "seed", std::to_string(seed));
    if (!output_dir.empty()) raw["output"]["directory"] = output_dir;
    return qkrot::parse_config(raw);
  }
};

std::pair<double, double> parse_interval(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw qkrot::ConfigError("--t expects LO:HI, got '" + s + "'");
  double lo = 0.0, hi = 0.0;
  try {
    std::size_t a = 0, b = 0;
    const std::string ls = s.substr(0, colon), hs = s.substr(colon + 1);
    lo = std::stod(ls, &a);
    hi = std::stod(hs, &b);
    if (a != ls.size() || b != hs.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw qkrot::ConfigError("--t expects LO:HI with numbers, got '" + s + "'");
  }
  if (!(lo < hi)) throw qkrot::ConfigError("--t interval " + s + " is empty (need LO < HI)");
  if (lo <= 0.0 || hi > 1.0) throw qkrot::ConfigError("--t interval must lie inside (0, 1]");
  return {lo, hi};
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw qkrot::ConfigError("--values: bad number '" + cell + "'");
    }
  }
  if (out.empty()) throw qkrot::ConfigError("--values: empty grid");
  return out;
}

std::string default_dir() {
  if (const char* env = std::getenv(qkrot::output_dir_env); env && *env) return env;
  return qkrot::default_output_dir;
}

int cmd_resonance_map(int jmax, const std::string& interval, const std::string& parity, double trev_ps,
                      const std::string& out_path) {
  const auto [lo, hi] = parse_interval(interval);
  const auto markers = qkrot::resonance_map(jmax, lo, hi, qkrot::parse_parity(parity));
  const std::string path = out_path.empty() ? (std::filesystem::path(default_dir()) / "resonance_map.csv").string() : out_path;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);

  std::ostringstream os;
  qkrot::write_resonance_csv(os, markers, trev_ps);
  qkrot::write_text_file(path, os.str());

  // Period ranges of the preset protocols, for overlay on the map.
  std::ostringstream iv;
  iv << "protocol,T_lo_over_Trev,T_hi_over_Trev\n";
  for (const char* name : {"fig3-1a", "fig3-2a", "fig4-1a", "fig4-2a"}) {
    const auto p = qkrot::presets::expand(name)->front();
    double a = p.T_lo_over_Trev, b = p.T_hi_over_Trev;
    if (p.design == qkrot::ProtocolDesign::Jitter) {
      a = p.mean_T_over_Trev * (1.0 - p.sigma_frac);
      b = p.mean_T_over_Trev * (1.0 + p.sigma_frac);
    }
    const std::string set = std::string(name).substr(0, 6);
    iv << set << ',' << qkrot::format_double(a) << ',' << qkrot::format_double(b) << '\n';
  }
  auto ipath = std::filesystem::path(path);
  ipath.replace_filename(ipath.stem().string() + ".intervals.csv");
  qkrot::write_text_file(ipath.string(), iv.str());
  std::printf("%zu markers -> %s\nprotocol intervals -> %s\n", markers.size(), path.c_str(), ipath.string().c_str());
  return exit_ok;
}

int cmd_simulate(const std::string& config_path, const Overrides& ov, bool quiet) {
  const qkrot::ExperimentConfig cfg = ov.load(config_path);
  const auto runs = qkrot::expand_runs(cfg);
  qkrot::PropagatorCache cache(cfg.rotor());
  std::vector<qkrot::RunOutput> outputs;
  bool fit_failed = false;
  for (const auto& p : runs) {
    outputs.push_back(qkrot::run_protocol(cfg, p, &cache));
    const auto& o = outputs.back();
    if (o.fit_error) fit_failed = true;
    // the shaper only holds about 50 ps of pulse train; warn, the run itself is fine
    const double limit = shaper_window_ps / cfg.spec.revival_time_ps;
    int too_long = 0;
    for (const auto& t : o.result.train_set.trains) too_long += qkrot::shaper_window_warning(t, limit).has_value();
    if (too_long > 0)
      std::fprintf(stderr, "qkrot: warning: %s: %d of %zu trains span more than %.0f ps\n", p.name.c_str(), too_long,
                   o.result.train_set.trains.size(), shaper_window_ps);
    if (quiet) continue;
    if (o.shape) {
      const auto& f = qkrot::headline_fit(*o.shape);
      std::printf("%-14s %-11s score=%-8.3g J_c=%-7.3f width=%-7.3f E_final=%.4g hcB\n", p.name.c_str(),
                  std::string(qkrot::to_string(o.shape->label)).c_str(), o.shape->score, f.center, f.width,
                  o.energy.back().hcB);
    } else {
      std::printf("%-14s fit: %s  E_final=%.4g hcB\n", p.name.c_str(), o.fit_error.value_or("off").c_str(),
                  o.energy.back().hcB);
    }
  }
  const std::string dir = qkrot::resolve_output_dir(cfg);
  const auto files = qkrot::write_outputs(cfg, outputs, dir);
  if (!quiet) std::printf("%zu files -> %s (config %s)\n", files.size(), dir.c_str(), qkrot::config_hash(cfg).c_str());
  if (fit_failed) {
    std::fprintf(stderr, "qkrot: at least one fit failed; see the .fit.json files\n");
    return exit_numerical;
  }
  return exit_ok;
}

int cmd_sweep(const std::string& config_path, const Overrides& ov, const std::string& axis_name,
              const std::string& values, const std::string& out_path) {
  const qkrot::ExperimentConfig cfg = ov.load(config_path);
  const auto axis = qkrot::parse_sweep_axis(axis_name);
  const auto rows = qkrot::run_sweep(cfg, axis, parse_values(values));
  std::ostringstream os;
  qkrot::write_sweep_csv(os, cfg, axis, rows);
  std::string path = out_path;
  if (path.empty()) {
    const std::string dir = qkrot::resolve_output_dir(cfg);
    std::filesystem::create_directories(dir);
    path = (std::filesystem::path(dir) / "sweep.csv").string();
  }
  qkrot::write_text_file(path, os.str());
  std::cout << os.str();
  return exit_ok;
}

int cmd_fit(const std::string& csv_path, int kick, const std::string& parity, int j_lim, bool mask,
            const std::string& out_path) {
  std::istringstream is(qkrot::read_text_file(csv_path));
  const Eigen::MatrixXd m = qkrot::read_populations_csv(is);
  const int row = kick < 0 ? static_cast<int>(m.rows()) - 1 : kick;
  if (row >= m.rows()) throw qkrot::ConfigError("--kick " + std::to_string(kick) + " is past the last kick");
  const Eigen::VectorXd pv = m.row(row).transpose();
  const std::vector<double> p(pv.data(), pv.data() + pv.size());

  qkrot::RotorSpec spec = qkrot::oxygen16();
  spec.parity = qkrot::parse_parity(parity);
  spec.j_max = static_cast<int>(p.size()) - 1;
  qkrot::FitOptions opt;
  opt.j_lim = j_lim;
  opt.noise_floor_mask = mask;
  const auto w = qkrot::fit_window(p, spec, opt);
  const auto c = qkrot::classify_shape(p, w, opt);
  nlohmann::json j = {{"source", csv_path}, {"kick", row}, {"classification", qkrot::classification_to_json(c)},
                      {"fit", qkrot::fit_to_json(qkrot::headline_fit(c))}};
  const std::string text = j.dump(1) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    qkrot::write_text_file(out_path, text);
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qkrot: quantum kicked molecular rotor simulator"};
  app.require_subcommand(1);

  int jmax = 13;
  std::string interval = "0.2:0.45", parity = "odd", rmap_out;
  double trev_ps = 11.67;
  auto* rmap = app.add_subcommand("resonance-map", "Write fractional-resonance markers m/(2J+3) as CSV");
  rmap->add_option("--jmax", jmax, "Largest J")->check(CLI::Range(0, 100000));
  rmap->add_option("--t", interval, "Period interval LO:HI in units of T_rev");
  rmap->add_option("--parity", parity, "Allowed J")->check(CLI::IsMember({"odd", "even", "both"}));
  rmap->add_option("--trev-ps", trev_ps, "Revival time in ps")->check(CLI::PositiveNumber);
  rmap->add_option("-o,--out", rmap_out, "Output CSV (default: <output dir>/resonance_map.csv)");

  std::string config_path;
  bool quiet = false;
  Overrides sim_ov;
  auto* sim = app.add_subcommand("simulate", "Run a config (or re-run a result JSON)");
  sim->add_option("config", config_path, "Config JSON or result JSON")->required();
  sim->add_flag("-q,--quiet", quiet, "No per-run summary");
  sim_ov.attach(sim);

  std::string axis, values, sweep_out;
  Overrides sweep_ov;
  auto* sweep = app.add_subcommand("sweep", "Run one protocol over a grid of P or mean period");
  sweep->add_option("config", config_path, "Config JSON")->required();
  sweep->add_option("--axis", axis, "P or mean_T")->required()->check(CLI::IsMember({"P", "mean_T"}));
  sweep->add_option("--values", values, "Comma-separated grid")->required();
  sweep->add_option("-o,--out", sweep_out, "Output CSV (default: <output dir>/sweep.csv)");
  sweep_ov.attach(sweep);

  std::string csv_path, fit_out, fit_parity = "odd";
  int kick = -1, j_lim = 21;
  bool mask = false;
  auto* fit = app.add_subcommand("fit", "Re-fit a populations CSV");
  fit->add_option("csv", csv_path, "populations CSV")->required();
  fit->add_option("--kick", kick, "Kick index (default: last)")->check(CLI::NonNegativeNumber);
  fit->add_option("--parity", fit_parity, "Allowed J")->check(CLI::IsMember({"odd", "even", "both"}));
  fit->add_option("--j-lim", j_lim, "Upper fit limit")->check(CLI::Range(1, 100000));
  fit->add_flag("--noise-floor-mask", mask, "Drop populations below 5e-3");
  fit->add_option("-o,--out", fit_out, "Output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    if (*rmap) return cmd_resonance_map(jmax, interval, parity, trev_ps, rmap_out);
    if (*sim) return cmd_simulate(config_path, sim_ov, quiet);
    if (*sweep) return cmd_sweep(config_path, sweep_ov, axis, values, sweep_out);
    if (*fit) return cmd_fit(csv_path, kick, fit_parity, j_lim, mask, fit_out);
  } catch (const qkrot::ConfigError& e) {
    std::fprintf(stderr, "qkrot: %s\n", e.what());
    return exit_config;
  } catch (const qkrot::NumericalError& e) {
    std::fprintf(stderr, "qkrot: numerical error: %s\n", e.what());
    return exit_numerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "qkrot: %s\n", e.what());
    return exit_config;
  }
  return exit_config;
}
