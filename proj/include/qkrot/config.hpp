#pragma once

// Experiment configuration (JSON). Sections:
//   spec        rotor constants, physical units in the key names
//   protocol    {"preset": name} or an explicit train-set design
//   simulation  kick mode, basis size, thermal ensemble, workers
//   analysis    fit toggles
//   output      directory and formats
//   seed        base seed for every random draw
// Parsing collects every violated key before throwing.

#include <cstdint>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkrot/analysis.hpp"
#include "qkrot/errors.hpp"
#include "qkrot/propagation.hpp"
#include "qkrot/rotor_basis.hpp"

namespace qkrot {

enum class ProtocolDesign { Periodic, Jitter };

struct ProtocolSpec {
  std::string name = "custom";
  ProtocolDesign design = ProtocolDesign::Periodic;
  int n_pulses = 13;
  int count = 10;
  double P = 4.0;
  double fwhm_fs = 130.0;
  // periodic
  double T_lo_over_Trev = 0.0;
  double T_hi_over_Trev = 0.0;
  // jitter
  double mean_T_over_Trev = 0.0;
  double sigma_frac = 0.0;
  std::vector<int> avoid_J;
  double min_distance_fs = 0.0;
};

struct SimulationSettings {
  KickMode mode = KickMode::finite();
  int j_max = 61;  // 41 lets the strongest jittered presets touch the leakage guard
  double temperature_K = 25.0;
  double thermal_cutoff = 0.999;
  unsigned workers = 0;
  double amplitude_noise_frac = 0.0;
  double leakage_threshold = default_leakage_threshold;  // infinity: guard off
  bool use_m_symmetry = true;
};

struct AnalysisSettings {
  bool fit = true;
  FitOptions fit_options;
};

struct OutputSettings {
  std::optional<std::string> directory;
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  RotorSpec spec = oxygen16();
  std::optional<std::string> preset;
  std::optional<ProtocolSpec> protocol;  // explicit design, when no preset
  SimulationSettings simulation;
  AnalysisSettings analysis;
  OutputSettings output;
  std::uint64_t seed = 1;

  RotorSpec rotor() const {
    RotorSpec s = spec;
    s.j_max = simulation.j_max;
    return s;
  }
};

namespace presets {

inline constexpr double pulse_fwhm_fs = 130.0;

inline ProtocolSpec periodic(std::string name, double T_lo, double T_hi, double P) {
  ProtocolSpec p;
  p.name = std::move(name);
  p.design = ProtocolDesign::Periodic;
  p.T_lo_over_Trev = T_lo;
  p.T_hi_over_Trev = T_hi;
  p.P = P;
  p.fwhm_fs = pulse_fwhm_fs;
  return p;
}

inline ProtocolSpec jitter(std::string name, double mean_T, double sigma_frac, std::vector<int> avoid_J,
                           double min_distance_fs, double P) {
  ProtocolSpec p;
  p.name = std::move(name);
  p.design = ProtocolDesign::Jitter;
  p.mean_T_over_Trev = mean_T;
  p.sigma_frac = sigma_frac;
  p.avoid_J = std::move(avoid_J);
  p.min_distance_fs = min_distance_fs;
  p.P = P;
  p.fwhm_fs = pulse_fwhm_fs;
  return p;
}

// Figure-3 sets: 1 avoids the low resonances, 2 sits between the J=5 and J=3 markers.
inline ProtocolSpec set1_periodic(std::string name, double P) { return periodic(std::move(name), 0.26, 0.29, P); }
inline ProtocolSpec set2_periodic(std::string name, double P) { return periodic(std::move(name), 0.315, 0.325, P); }
// Figure-4 sets: 1 keeps every interval 150 fs away from J = 1, 3, 5 markers, 2 is unrestricted.
inline ProtocolSpec set1_jitter(std::string name, double P) {
  return jitter(std::move(name), 0.34, 0.35, {1, 3, 5}, 150.0, P);
}
inline ProtocolSpec set2_jitter(std::string name, double P) { return jitter(std::move(name), 0.32, 0.43, {}, 0.0, P); }

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"fig3-1a", "fig3-1b", "fig3-1c", "fig3-2a", "fig3-2b", "fig3-2c", "fig4-1a",
                                          "fig4-1b", "fig4-1c", "fig4-2a", "fig4-2b", "fig4-2c", "fig5"};
  return n;
}

inline std::optional<std::vector<ProtocolSpec>> expand(const std::string& name) {
  const double strengths[] = {4.0, 6.0, 8.0};
  const char letters[] = {'a', 'b', 'c'};
  for (int i = 0; i < 3; ++i) {
    const double P = strengths[i];
    const std::string suffix(1, letters[i]);
    if (name == "fig3-1" + suffix) return std::vector{set1_periodic(name, P)};
    if (name == "fig3-2" + suffix) return std::vector{set2_periodic(name, P)};
    if (name == "fig4-1" + suffix) return std::vector{set1_jitter(name, P)};
    if (name == "fig4-2" + suffix) return std::vector{set2_jitter(name, P)};
  }
  if (name == "fig5") {
    // Panels: 1a/2a periodic sets, 1b/2b jittered sets; each at P = 4, 6, 8.
    std::vector<ProtocolSpec> runs;
    for (double P : strengths) {
      const std::string tag = "-P" + std::to_string(static_cast<int>(P));
      runs.push_back(set1_periodic("fig5-1a" + tag, P));
      runs.push_back(set2_periodic("fig5-2a" + tag, P));
      runs.push_back(set1_jitter("fig5-1b" + tag, P));
      runs.push_back(set2_jitter("fig5-2b" + tag, P));
    }
    return runs;
  }
  return std::nullopt;
}

}  // namespace presets

/// The run list a config stands for: a preset's protocols or the one explicit protocol.
inline std::vector<ProtocolSpec> expand_runs(const ExperimentConfig& cfg) {
  if (cfg.preset) {
    auto runs = presets::expand(*cfg.preset);
    if (!runs) throw ConfigError("protocol.preset: unknown preset '" + *cfg.preset + "'");
    return *runs;
  }
  if (!cfg.protocol) throw ConfigError("protocol: neither a preset nor an explicit design is set");
  return {*cfg.protocol};
}

namespace detail {

// Reads one JSON object, remembering which keys were consumed and every problem seen.
class SectionReader {
 public:
  SectionReader(const nlohmann::json* obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {}

  bool has(const std::string& key) const { return obj_ && obj_->contains(key) && !obj_->at(key).is_null(); }

  bool null_value(const std::string& key) {
    seen_.insert(key);
    return obj_ && obj_->contains(key) && obj_->at(key).is_null();
  }

  void fail(const std::string& key, const std::string& msg) { errors_.push_back(path_ + "." + key + ": " + msg); }

  template <class F>
  void number(const std::string& key, double& out, F ok, const char* rule) {
    if (!touch(key)) return;
    const auto& v = obj_->at(key);
    if (!v.is_number()) return fail(key, "expected a number");
    const double x = v.get<double>();
    if (!ok(x)) return fail(key, rule);
    out = x;
  }

  template <class F>
  void integer(const std::string& key, long long& out, F ok, const char* rule) {
    if (!touch(key)) return;
    const auto& v = obj_->at(key);
    if (!v.is_number_integer()) return fail(key, "expected an integer");
    const long long x = v.get<long long>();
    if (!ok(x)) return fail(key, rule);
    out = x;
  }

  void boolean(const std::string& key, bool& out) {
    if (!touch(key)) return;
    const auto& v = obj_->at(key);
    if (!v.is_boolean()) return fail(key, "expected true or false");
    out = v.get<bool>();
  }

  bool string(const std::string& key, std::string& out) {
    if (!touch(key)) return false;
    const auto& v = obj_->at(key);
    if (!v.is_string()) {
      fail(key, "expected a string");
      return false;
    }
    out = v.get<std::string>();
    return true;
  }

  bool raw(const std::string& key, const nlohmann::json*& out) {
    if (!touch(key)) return false;
    out = &obj_->at(key);
    return true;
  }

  // Unknown keys are errors: a typo would otherwise silently fall back to a default.
  void finish() {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items())
      if (!seen_.count(k)) errors_.push_back(path_ + "." + k + ": unknown key");
  }

 private:
  bool touch(const std::string& key) {
    seen_.insert(key);
    return has(key);
  }

  const nlohmann::json* obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

inline const nlohmann::json* section(const nlohmann::json& root, const char* key, std::vector<std::string>& errors) {
  if (!root.contains(key) || root.at(key).is_null()) return nullptr;
  if (!root.at(key).is_object()) {
    errors.push_back(std::string(key) + ": expected an object");
    return nullptr;
  }
  return &root.at(key);
}

inline constexpr auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
inline constexpr auto non_negative = [](double x) { return x >= 0.0 && std::isfinite(x); };

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  std::vector<std::string> errors;
  ExperimentConfig cfg;
  if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");

  for (const auto& [k, v] : root.items()) {
    static const std::set<std::string> known{"spec", "protocol", "simulation", "analysis", "output", "seed"};
    if (!known.count(k)) errors.push_back(k + ": unknown key");
  }

  {
    detail::SectionReader r(detail::section(root, "spec", errors), "spec", errors);
    r.number("revival_time_ps", cfg.spec.revival_time_ps, detail::positive, "must be > 0");
    std::string parity;
    if (r.string("parity", parity)) {
      try {
        cfg.spec.parity = parse_parity(parity);
      } catch (const ConfigError&) {
        r.fail("parity", "must be one of odd, even, both");
      }
    }
    r.number("centrifugal_const_per_cm", cfg.spec.centrifugal_const_per_cm, detail::non_negative, "must be >= 0");
    double alpha = 0.0;
    r.number("polarizability_anisotropy_A3", alpha, detail::positive, "must be > 0");
    if (alpha > 0.0) cfg.spec.polarizability_anisotropy_A3 = alpha;
    r.finish();
  }

  {
    const nlohmann::json* sec = detail::section(root, "protocol", errors);
    detail::SectionReader r(sec, "protocol", errors);
    const bool has_preset = r.has("preset");
    const bool has_design = r.has("design");
    if (sec == nullptr) {
      errors.push_back("protocol: missing section (set protocol.preset or protocol.design)");
    } else if (has_preset == has_design) {
      errors.push_back("protocol: exactly one of 'preset' and 'design' must be given");
    }
    std::string preset;
    if (r.string("preset", preset)) {
      if (!presets::expand(preset)) {
        std::string all;
        for (const auto& n : presets::names()) all += (all.empty() ? "" : ", ") + n;
        r.fail("preset", "unknown preset '" + preset + "' (known: " + all + ")");
      } else {
        cfg.preset = preset;
      }
    }
    std::string design;
    if (r.string("design", design) || (sec && !has_preset)) {
      ProtocolSpec p;
      p.name = "custom";
      r.string("name", p.name);
      long long n_pulses = p.n_pulses, count = p.count;
      r.integer("n_pulses", n_pulses, [](long long x) { return x >= 1 && x <= 100000; }, "must be in [1, 100000]");
      r.integer("count", count, [](long long x) { return x >= 1 && x <= 100000; }, "must be in [1, 100000]");
      p.n_pulses = static_cast<int>(n_pulses);
      p.count = static_cast<int>(count);
      if (!r.has("P")) r.fail("P", "required");
      r.number("P", p.P, detail::non_negative, "must be >= 0");
      r.number("fwhm_fs", p.fwhm_fs, detail::non_negative, "must be >= 0");
      if (design == "periodic") {
        p.design = ProtocolDesign::Periodic;
        if (!r.has("T_lo_over_Trev")) r.fail("T_lo_over_Trev", "required for design 'periodic'");
        if (!r.has("T_hi_over_Trev")) r.fail("T_hi_over_Trev", "required for design 'periodic'");
        r.number("T_lo_over_Trev", p.T_lo_over_Trev, detail::positive, "must be > 0");
        r.number("T_hi_over_Trev", p.T_hi_over_Trev, detail::positive, "must be > 0");
        if (p.T_lo_over_Trev > 0.0 && p.T_hi_over_Trev > 0.0 && p.T_hi_over_Trev < p.T_lo_over_Trev)
          r.fail("T_hi_over_Trev", "must be >= T_lo_over_Trev");
        if (p.count < 2) r.fail("count", "a periodic interval set needs count >= 2");
      } else if (design == "jitter") {
        p.design = ProtocolDesign::Jitter;
        if (!r.has("mean_T_over_Trev")) r.fail("mean_T_over_Trev", "required for design 'jitter'");
        r.number("mean_T_over_Trev", p.mean_T_over_Trev, detail::positive, "must be > 0");
        r.number("sigma_frac", p.sigma_frac, detail::non_negative, "must be >= 0");
        const nlohmann::json* avoid = nullptr;
        if (r.raw("avoid_J", avoid)) {
          bool ok = avoid->is_array();
          if (ok)
            for (const auto& v : *avoid) ok = ok && v.is_number_integer() && v.get<long long>() >= 0;
          if (!ok) {
            r.fail("avoid_J", "expected an array of integers >= 0");
          } else {
            for (const auto& v : *avoid) p.avoid_J.push_back(v.get<int>());
          }
        }
        r.number("min_distance_fs", p.min_distance_fs, detail::non_negative, "must be >= 0");
        if (!p.avoid_J.empty() && !r.has("min_distance_fs")) r.fail("min_distance_fs", "required with avoid_J");
      } else {
        r.fail("design", "must be 'periodic' or 'jitter'");
      }
      if (!has_preset) cfg.protocol = p;
    }
    r.finish();
  }

  {
    detail::SectionReader r(detail::section(root, "simulation", errors), "simulation", errors);
    std::string mode;
    if (r.string("mode", mode)) {
      if (mode == "delta") {
        cfg.simulation.mode = KickMode::delta();
      } else if (mode == "finite") {
        cfg.simulation.mode = KickMode::finite();
      } else {
        r.fail("mode", "must be 'delta' or 'finite'");
      }
    }
    long long n_sub = cfg.simulation.mode.kind == KickMode::Kind::Finite ? 64 : 0;
    r.integer("n_sub", n_sub, [](long long x) { return x >= 1 && x <= max_substeps; },
              "must be in [1, 4194304]");
    if (cfg.simulation.mode.kind == KickMode::Kind::Finite) cfg.simulation.mode.n_sub = static_cast<int>(n_sub);
    long long j_max = cfg.simulation.j_max;
    r.integer("j_max", j_max, [](long long x) { return x >= 3 && x <= 2000; }, "must be in [3, 2000]");
    cfg.simulation.j_max = static_cast<int>(j_max);
    r.number("temperature_K", cfg.simulation.temperature_K, detail::positive, "must be > 0");
    r.number("thermal_cutoff", cfg.simulation.thermal_cutoff, [](double x) { return x > 0.0 && x < 1.0; },
             "must be in (0, 1)");
    long long workers = 0;
    r.integer("workers", workers, [](long long x) { return x >= 0 && x <= 4096; }, "must be in [0, 4096]");
    cfg.simulation.workers = static_cast<unsigned>(workers);
    r.number("amplitude_noise_frac", cfg.simulation.amplitude_noise_frac, detail::non_negative, "must be >= 0");
    // explicit null switches the guard off
    if (r.null_value("leakage_threshold"))
      cfg.simulation.leakage_threshold = std::numeric_limits<double>::infinity();
    else
      r.number("leakage_threshold", cfg.simulation.leakage_threshold, detail::positive, "must be > 0");
    r.boolean("use_m_symmetry", cfg.simulation.use_m_symmetry);
    r.finish();
  }

  {
    detail::SectionReader r(detail::section(root, "analysis", errors), "analysis", errors);
    auto& fo = cfg.analysis.fit_options;
    r.boolean("fit", cfg.analysis.fit);
    r.boolean("noise_floor_mask", fo.noise_floor_mask);
    r.number("noise_floor", fo.noise_floor, detail::positive, "must be > 0");
    long long j_lim = fo.j_lim, j_floor = fo.j_floor;
    r.integer("j_lim", j_lim, [](long long x) { return x >= 1 && x <= 2000; }, "must be in [1, 2000]");
    r.integer("j_floor", j_floor, [](long long x) { return x >= 0 && x <= 2000; }, "must be in [0, 2000]");
    fo.j_lim = static_cast<int>(j_lim);
    fo.j_floor = static_cast<int>(j_floor);
    r.number("population_threshold", fo.population_threshold, [](double x) { return x > 0.0 && x < 1.0; },
             "must be in (0, 1)");
    r.finish();
  }

  {
    detail::SectionReader r(detail::section(root, "output", errors), "output", errors);
    std::string dir;
    if (r.string("directory", dir)) {
      if (dir.empty())
        r.fail("directory", "must not be empty");
      else
        cfg.output.directory = dir;
    }
    const nlohmann::json* formats = nullptr;
    if (r.raw("formats", formats)) {
      bool ok = formats->is_array() && !formats->empty();
      bool csv = false, json = false;
      if (ok) {
        for (const auto& f : *formats) {
          if (f == "csv")
            csv = true;
          else if (f == "json")
            json = true;
          else
            ok = false;
        }
      }
      if (!ok) {
        r.fail("formats", "expected a non-empty array drawn from \"csv\", \"json\"");
      } else {
        cfg.output.csv = csv;
        cfg.output.json = json;
      }
    }
    r.finish();
  }

  if (root.contains("seed")) {
    const auto& s = root.at("seed");
    if (s.is_number_unsigned())
      cfg.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<long long>() >= 0)
      cfg.seed = static_cast<std::uint64_t>(s.get<long long>());
    else
      errors.push_back("seed: expected an integer >= 0");
  }

  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

inline nlohmann::json protocol_to_json(const ProtocolSpec& p) {
  nlohmann::json j = {{"name", p.name}, {"n_pulses", p.n_pulses}, {"count", p.count}, {"P", p.P}, {"fwhm_fs", p.fwhm_fs}};
  if (p.design == ProtocolDesign::Periodic) {
    j["design"] = "periodic";
    j["T_lo_over_Trev"] = p.T_lo_over_Trev;
    j["T_hi_over_Trev"] = p.T_hi_over_Trev;
  } else {
    j["design"] = "jitter";
    j["mean_T_over_Trev"] = p.mean_T_over_Trev;
    j["sigma_frac"] = p.sigma_frac;
    j["avoid_J"] = p.avoid_J;
    j["min_distance_fs"] = p.min_distance_fs;
  }
  return j;
}

/// Normalized config with every default filled in. Without `with_runtime`,
/// keys that cannot change results (output section, worker count) are left
/// out; that form is what gets hashed and embedded in outputs.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg, bool with_runtime = false) {
  nlohmann::json spec = {{"revival_time_ps", cfg.spec.revival_time_ps},
                         {"parity", std::string(to_string(cfg.spec.parity))},
                         {"centrifugal_const_per_cm", cfg.spec.centrifugal_const_per_cm}};
  spec["polarizability_anisotropy_A3"] = cfg.spec.polarizability_anisotropy_A3
                                             ? nlohmann::json(*cfg.spec.polarizability_anisotropy_A3)
                                             : nlohmann::json(nullptr);
  nlohmann::json protocol = cfg.preset ? nlohmann::json{{"preset", *cfg.preset}} : protocol_to_json(*cfg.protocol);
  const auto& s = cfg.simulation;
  nlohmann::json sim = {{"mode", s.mode.name()},
                        {"j_max", s.j_max},
                        {"temperature_K", s.temperature_K},
                        {"thermal_cutoff", s.thermal_cutoff},
                        {"amplitude_noise_frac", s.amplitude_noise_frac},
                        {"use_m_symmetry", s.use_m_symmetry}};
  if (s.mode.kind == KickMode::Kind::Finite) sim["n_sub"] = s.mode.n_sub;
  sim["leakage_threshold"] = std::isfinite(s.leakage_threshold) ? nlohmann::json(s.leakage_threshold) : nlohmann::json(nullptr);
  const auto& fo = cfg.analysis.fit_options;
  nlohmann::json analysis = {{"fit", cfg.analysis.fit},
                             {"noise_floor_mask", fo.noise_floor_mask},
                             {"noise_floor", fo.noise_floor},
                             {"j_lim", fo.j_lim},
                             {"j_floor", fo.j_floor},
                             {"population_threshold", fo.population_threshold}};
  nlohmann::json j = {{"spec", spec}, {"protocol", protocol}, {"simulation", sim}, {"analysis", analysis}, {"seed", cfg.seed}};
  if (with_runtime) {
    j["simulation"]["workers"] = s.workers;
    nlohmann::json formats = nlohmann::json::array();
    if (cfg.output.csv) formats.push_back("csv");
    if (cfg.output.json) formats.push_back("json");
    j["output"] = {{"formats", formats}};
    if (cfg.output.directory) j["output"]["directory"] = *cfg.output.directory;
  }
  return j;
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg).dump())));
  return buf;
}

/// Sets a dotted key ("simulation.mode") in a raw config object. The value is
/// parsed as JSON when it can be, else taken as a string.
inline void apply_override(nlohmann::json& root, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("override: empty key");
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;
  }
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override: malformed key '" + dotted_key + "'");
    if (!node->is_object()) throw ConfigError("override: '" + dotted_key + "' does not address an object member");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

}  // namespace qkrot
