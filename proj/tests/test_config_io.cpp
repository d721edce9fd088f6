#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "qkrot/qkrot.hpp"

using namespace qkrot;
using nlohmann::json;

namespace {

json preset_config(const std::string& name) {
  return {{"protocol", {{"preset", name}}}, {"simulation", {{"mode", "finite"}, {"n_sub", 64}}}, {"seed", 1}};
}

std::size_t count_problems(const std::string& what) {
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = what.find("\n  ", pos)) != std::string::npos; ++pos) ++n;
  return n;
}

}  // namespace

TEST(Config, EveryPresetValidatesAndExpands) {
  for (const auto& name : presets::names()) {
    const auto cfg = parse_config(preset_config(name));
    const auto runs = expand_runs(cfg);
    EXPECT_EQ(runs.size(), name == "fig5" ? 12u : 1u) << name;
    for (const auto& r : runs) {
      EXPECT_EQ(r.n_pulses, 13);
      EXPECT_EQ(r.count, 10);
      EXPECT_EQ(r.fwhm_fs, 130.0);
      EXPECT_TRUE(r.P == 4.0 || r.P == 6.0 || r.P == 8.0);
    }
  }
  const auto fig4 = expand_runs(parse_config(preset_config("fig4-1c")));
  EXPECT_EQ(fig4[0].design, ProtocolDesign::Jitter);
  EXPECT_EQ(fig4[0].avoid_J, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(fig4[0].min_distance_fs, 150.0);
  EXPECT_EQ(fig4[0].P, 8.0);
}

TEST(Config, ShippedConfigFilesParse) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(__FILE__).parent_path().parent_path() / "configs";
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(parse_config(json::parse(read_text_file(e.path().string())))) << e.path();
    ++n;
  }
  EXPECT_GE(n, 14);
}

TEST(Config, CollectsEveryProblem) {
  const json bad = {{"protocol", {{"design", "periodic"}, {"P", -1}, {"T_lo_over_Trev", 0.3}}},
                    {"simulation", {{"mode", "sudden"}, {"temperature_K", 0}}},
                    {"bogus", 1}};
  try {
    parse_config(bad);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string w = e.what();
    EXPECT_EQ(count_problems(w), 5u) << w;
    for (const char* key : {"protocol.P", "protocol.T_hi_over_Trev", "simulation.mode", "simulation.temperature_K", "bogus"})
      EXPECT_NE(w.find(key), std::string::npos) << key << "\n" << w;
  }
}

TEST(Config, PresetXorDesign) {
  EXPECT_THROW(parse_config(json{{"protocol", {{"preset", "fig3-1a"}, {"design", "periodic"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"seed", 1}}), ConfigError);
  EXPECT_THROW(parse_config(preset_config("fig9")), ConfigError);
}

TEST(Config, ExplicitProtocols) {
  const json j = {{"protocol",
                   {{"design", "jitter"},
                    {"name", "mine"},
                    {"mean_T_over_Trev", 0.33},
                    {"sigma_frac", 0.2},
                    {"avoid_J", {1, 3}},
                    {"min_distance_fs", 100},
                    {"P", 5}}},
                  {"simulation", {{"leakage_threshold", nullptr}, {"mode", "delta"}}}};
  const auto cfg = parse_config(j);
  ASSERT_TRUE(cfg.protocol);
  EXPECT_EQ(cfg.protocol->name, "mine");
  EXPECT_EQ(cfg.protocol->avoid_J, (std::vector<int>{1, 3}));
  EXPECT_TRUE(std::isinf(cfg.simulation.leakage_threshold));
  EXPECT_EQ(cfg.simulation.mode.kind, KickMode::Kind::Delta);
  // avoid_J without a distance is incomplete
  json k = j;
  k["protocol"].erase("min_distance_fs");
  EXPECT_THROW(parse_config(k), ConfigError);
}

TEST(Config, NormalizedJsonRoundTrips) {
  for (const char* name : {"fig3-2b", "fig5"}) {
    const auto cfg = parse_config(preset_config(name));
    const auto again = parse_config(config_to_json(cfg, true));
    EXPECT_EQ(config_to_json(cfg, true), config_to_json(again, true));
    EXPECT_EQ(config_hash(cfg), config_hash(again));
  }
  json custom = {{"protocol", {{"design", "periodic"}, {"T_lo_over_Trev", 0.3}, {"T_hi_over_Trev", 0.31}, {"P", 5}}},
                 {"output", {{"directory", "x"}, {"formats", {"csv"}}}}};
  const auto c = parse_config(custom);
  EXPECT_EQ(config_to_json(parse_config(config_to_json(c, true)), true), config_to_json(c, true));
}

TEST(Config, HashIgnoresRuntimeKeys) {
  json a = preset_config("fig3-1a");
  json b = a;
  b["simulation"]["workers"] = 3;
  b["output"] = {{"directory", "elsewhere"}};
  EXPECT_EQ(config_hash(parse_config(a)), config_hash(parse_config(b)));
  b["seed"] = 2;
  EXPECT_NE(config_hash(parse_config(a)), config_hash(parse_config(b)));
  EXPECT_EQ(config_hash(parse_config(a)).size(), 16u);
  // FNV-1a 64 reference values
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, Overrides) {
  json j = preset_config("fig3-1a");
  apply_override(j, "simulation.mode", "delta");
  apply_override(j, "simulation.temperature_K", "10");
  apply_override(j, "analysis.noise_floor_mask", "true");
  apply_override(j, "spec.parity", "odd");
  const auto cfg = parse_config(j);
  EXPECT_EQ(cfg.simulation.mode.kind, KickMode::Kind::Delta);
  EXPECT_EQ(cfg.simulation.temperature_K, 10.0);
  EXPECT_TRUE(cfg.analysis.fit_options.noise_floor_mask);
  EXPECT_THROW(apply_override(j, "", "1"), ConfigError);
  EXPECT_THROW(apply_override(j, "seed.x", "1"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b", "1"), ConfigError);
}

TEST(Io, PopulationsCsvRoundTripIsExact) {
  Eigen::MatrixXd m(3, 5);
  m << 0, 0.1, 0, 0.9, 0, 0, 1.0 / 3.0, 0, 2.0 / 3.0, 0, 0, 1e-300, 0, M_PI / 4, 0;
  std::stringstream ss;
  ss << "# qkrot run=x config_hash=0 seed=1\n";
  write_populations_csv(ss, m);
  const auto back = read_populations_csv(ss);
  EXPECT_EQ(back, m);
}

TEST(Io, PopulationsCsvRejectsMalformed) {
  std::stringstream a("kick,P_J0,P_J2\n0,1,0\n");
  EXPECT_THROW(read_populations_csv(a), ConfigError);
  std::stringstream b("kick,P_J0,P_J1\n0,1\n");
  EXPECT_THROW(read_populations_csv(b), ConfigError);
  std::stringstream c("kick,P_J0,P_J1\n0,1,abc\n");
  EXPECT_THROW(read_populations_csv(c), ConfigError);
  std::stringstream d("");
  EXPECT_THROW(read_populations_csv(d), ConfigError);
}

TEST(Io, FitJsonFields) {
  std::vector<double> p(42, 0.0);
  for (int J = 1; J <= 41; J += 2) p[static_cast<std::size_t>(J)] = std::exp(-std::abs(J - 6.0) / 4.0);
  const auto c = classify_shape(p, FitWindow{5, 21, 2});
  const auto j = classification_to_json(c);
  EXPECT_EQ(j["label"], "exponential");
  for (const char* k : {"model", "J_c", "width", "amplitude", "rms_log_residual", "window", "points", "floored", "std_errors"})
    EXPECT_TRUE(j["exponential"].contains(k)) << k;
  EXPECT_EQ(j["exponential"]["window"]["J_min"], 5);
  EXPECT_EQ(j["exponential"]["window"]["J_max"], 21);
  // exact fit: standard errors are 0, not null
  EXPECT_TRUE(j["gaussian"]["std_errors"]["width"].is_number());
}

TEST(Io, ReportCsvColumns) {
  FitResult f;
  f.center = 5.5;
  f.width = 3.25;
  f.rms_log_residual = 0.125;
  std::ostringstream os;
  write_report_csv(os, {{"fig3-1a", 4.0, "exponential", f}});
  EXPECT_EQ(os.str(), "protocol,P,model,J_c,width,residual,label\nfig3-1a,4,exponential,5.5,3.25,0.125,exponential\n");
}

TEST(Experiment, OutputsCarryHashAndRoundTrip) {
  namespace fs = std::filesystem;
  json raw = preset_config("fig3-1a");
  apply_override(raw, "simulation.mode", "delta");
  const auto cfg = parse_config(raw);
  std::vector<RunOutput> runs;
  for (const auto& p : expand_runs(cfg)) runs.push_back(run_protocol(cfg, p));
  const fs::path dir = fs::temp_directory_path() / "qkrot-config-io-test";
  fs::remove_all(dir);
  write_outputs(cfg, runs, dir.string());
  for (const char* f : {"fig3-1a.populations.csv", "fig3-1a.energy.csv", "fig3-1a.result.json", "fig3-1a.fit.json", "report.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const std::string hash = config_hash(cfg);
  const auto result = json::parse(read_text_file((dir / "fig3-1a.result.json").string()));
  EXPECT_EQ(result["format"], result_format_tag);
  EXPECT_EQ(result["config_hash"], hash);
  const std::string csv = read_text_file((dir / "fig3-1a.populations.csv").string());
  EXPECT_EQ(csv.rfind("# qkrot run=fig3-1a config_hash=" + hash + " seed=1\n", 0), 0u);

  std::istringstream in(csv);
  EXPECT_EQ(read_populations_csv(in), runs[0].result.p_of_J_after_kick);

  const auto reloaded = load_config_json((dir / "fig3-1a.result.json").string());
  EXPECT_EQ(config_hash(parse_config(reloaded)), hash);
  fs::remove_all(dir);
}

TEST(Experiment, OutputDirectoryResolution) {
  ExperimentConfig cfg;
  cfg.output.directory = "explicit";
  EXPECT_EQ(resolve_output_dir(cfg), "explicit");
  cfg.output.directory.reset();
  ::setenv(output_dir_env, "from-env", 1);
  EXPECT_EQ(resolve_output_dir(cfg), "from-env");
  ::unsetenv(output_dir_env);
  EXPECT_EQ(resolve_output_dir(cfg), default_output_dir);
}
