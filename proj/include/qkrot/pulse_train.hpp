#pragma once

// Pulse sequences: periodic trains, Gaussian interval jitter with optional
// resonance avoidance, and pulse-energy noise.
//
// Times, periods and FWHM are in units of T_rev; strengths are the
// dimensionless kick strength P.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkrot/errors.hpp"
#include "qkrot/lattice_map.hpp"
#include "qkrot/rng.hpp"

namespace qkrot {

struct Pulse {
  double time = 0.0;
  double strength = 0.0;
  double fwhm = 0.0;  // 0 means a delta kick

  friend bool operator==(const Pulse&, const Pulse&) = default;
};

// Minimum spacing between consecutive pulses, in units of their FWHM.
inline constexpr double min_gap_in_fwhm = 3.0;

struct PulseTrain {
  std::vector<Pulse> pulses;
  std::string label;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return pulses.size(); }

  std::vector<double> intervals() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < pulses.size(); ++i) out.push_back(pulses[i].time - pulses[i - 1].time);
    return out;
  }

  double window() const { return pulses.empty() ? 0.0 : pulses.back().time - pulses.front().time; }

  void validate() const {
    if (pulses.empty()) throw ConfigError("pulse train '" + label + "' is empty");
    for (std::size_t i = 0; i < pulses.size(); ++i) {
      const Pulse& p = pulses[i];
      if (!(p.strength >= 0.0) || !std::isfinite(p.strength))
        throw ConfigError("pulse train '" + label + "': strength must be >= 0");
      if (!(p.fwhm >= 0.0)) throw ConfigError("pulse train '" + label + "': fwhm must be >= 0");
      if (i == 0) continue;
      const double gap = p.time - pulses[i - 1].time;
      if (!(gap > 0.0))
        throw ConfigError("pulse train '" + label + "': times must be strictly increasing");
      const double widest = std::max(p.fwhm, pulses[i - 1].fwhm);
      if (!(gap > min_gap_in_fwhm * widest))
        throw ConfigError("pulse train '" + label + "': pulses " + std::to_string(i - 1) + " and " +
                          std::to_string(i) + " overlap (gap <= 3 FWHM)");
    }
  }

  friend bool operator==(const PulseTrain&, const PulseTrain&) = default;
};

enum class TrainDesign { PeriodicInterval, Jitter, JitterAvoiding, Custom };

inline std::string_view to_string(TrainDesign d) {
  switch (d) {
    case TrainDesign::PeriodicInterval: return "periodic-interval";
    case TrainDesign::Jitter: return "jitter";
    case TrainDesign::JitterAvoiding: return "jitter-avoiding";
    case TrainDesign::Custom: return "custom";
  }
  return "?";
}

struct TrainSet {
  std::vector<PulseTrain> trains;
  TrainDesign design = TrainDesign::Custom;
  nlohmann::json parameters = nlohmann::json::object();

  std::size_t pulses_per_train() const { return trains.empty() ? 0 : trains.front().size(); }

  // Every train valid and of equal length; nominal strengths equal unless
  // amplitude noise was applied.
  void validate() const {
    if (trains.empty()) throw ConfigError("train set is empty");
    const std::size_t n = trains.front().size();
    for (const auto& t : trains) {
      t.validate();
      if (t.size() != n) throw ConfigError("train set mixes trains of different length");
    }
    if (parameters.value("amplitude_noise_frac", 0.0) == 0.0) {
      const double p0 = trains.front().pulses.front().strength;
      for (const auto& t : trains)
        for (const auto& p : t.pulses)
          if (p.strength != p0) throw ConfigError("train set mixes kick strengths");
    }
  }
};

struct ResonanceAvoidance {
  std::vector<int> J_set;
  double min_distance_over_Trev = 0.0;
};

/// Optional warning when a train is longer than the pulse shaper window.
inline std::optional<std::string> shaper_window_warning(const PulseTrain& train, double limit_over_Trev) {
  if (train.window() > limit_over_Trev) {
    return "pulse train '" + train.label + "' spans " + std::to_string(train.window()) +
           " T_rev, longer than the shaper window of " + std::to_string(limit_over_Trev) + " T_rev";
  }
  return std::nullopt;
}

/// N pulses at 0, T, ..., (N-1)T with equal strengths.
inline PulseTrain periodic_train(int n_pulses, double period, double strength, double fwhm) {
  if (n_pulses < 1) throw ConfigError("periodic_train: need at least one pulse");
  if (!(period > 0.0)) throw ConfigError("periodic_train: period must be > 0");
  PulseTrain train;
  char buf[64];
  std::snprintf(buf, sizeof buf, "periodic T=%.6f", period);
  train.label = buf;
  for (int n = 0; n < n_pulses; ++n) train.pulses.push_back({n * period, strength, fwhm});
  train.validate();
  return train;
}

/// `count` periodic trains with periods evenly spaced over [T_lo, T_hi].
inline TrainSet periodic_set(int n_pulses, double T_lo, double T_hi, int count, double strength,
                             double fwhm) {
  if (count < 2) throw ConfigError("periodic_set: count must be >= 2");
  if (!(T_lo > 0.0 && T_hi >= T_lo)) throw ConfigError("periodic_set: need 0 < T_lo <= T_hi");
  TrainSet set;
  set.design = TrainDesign::PeriodicInterval;
  for (int i = 0; i < count; ++i) {
    const double T = T_lo + (T_hi - T_lo) * i / (count - 1);
    set.trains.push_back(periodic_train(n_pulses, T, strength, fwhm));
  }
  set.parameters = {{"n_pulses", n_pulses}, {"T_lo_over_Trev", T_lo}, {"T_hi_over_Trev", T_hi},
                    {"count", count},       {"P", strength},          {"fwhm_over_Trev", fwhm}};
  return set;
}

inline constexpr int max_interval_draws = 10000;

namespace detail {

inline PulseTrain jittered_train_stream(int n_pulses, double mean_T, double sigma_frac, std::uint64_t seed,
                                        std::uint64_t stream, const std::optional<ResonanceAvoidance>& avoid,
                                        double strength, double fwhm, double revival_time_ps) {
  Rng rng(seed, stream);
  const double sigma = sigma_frac * mean_T;
  const double floor = min_gap_in_fwhm * fwhm;
  PulseTrain train;
  train.seed = seed;
  train.label = "jitter seed=" + std::to_string(seed);
  train.pulses.push_back({0.0, strength, fwhm});
  double t = 0.0;
  for (int i = 1; i < n_pulses; ++i) {
    double gap = 0.0;
    bool accepted = false;
    for (int draw = 0; draw < max_interval_draws && !accepted; ++draw) {
      gap = mean_T + sigma * rng.normal();
      if (!(gap > floor)) continue;
      if (avoid) {
        const auto near = nearest_resonance_distance(gap, avoid->J_set, revival_time_ps);
        if (near.distance_over_Trev < avoid->min_distance_over_Trev) continue;
      }
      accepted = true;
    }
    if (!accepted) {
      std::string why = "interval > 3 FWHM";
      if (avoid) why += " and >= " + std::to_string(avoid->min_distance_over_Trev * revival_time_ps * 1e3) +
                        " fs from every resonance of the avoided J set";
      throw GenerationError("jittered_train: no interval satisfying " + why + " after " +
                            std::to_string(max_interval_draws) + " draws (seed " + std::to_string(seed) +
                            ", interval " + std::to_string(i) + ")");
    }
    t += gap;
    train.pulses.push_back({t, strength, fwhm});
  }
  train.validate();
  return train;
}

}  // namespace detail

/// Train whose N-1 intervals are independent Gaussian draws (mean mean_T,
/// sd sigma_frac * mean_T), redrawn when not longer than 3 FWHM or, with
/// `avoid`, when closer than the minimum distance to a resonance of the
/// avoided J set. sigma_frac = 0 gives exactly periodic_train.
inline PulseTrain jittered_train(int n_pulses, double mean_T, double sigma_frac, std::uint64_t seed,
                                 const std::optional<ResonanceAvoidance>& avoid, double strength, double fwhm,
                                 double revival_time_ps) {
  if (n_pulses < 1) throw ConfigError("jittered_train: need at least one pulse");
  if (!(mean_T > 0.0)) throw ConfigError("jittered_train: mean period must be > 0");
  if (!(sigma_frac >= 0.0)) throw ConfigError("jittered_train: sigma_frac must be >= 0");
  if (sigma_frac == 0.0) {
    if (avoid && n_pulses > 1 &&
        nearest_resonance_distance(mean_T, avoid->J_set, revival_time_ps).distance_over_Trev <
            avoid->min_distance_over_Trev)
      throw GenerationError("jittered_train: sigma is 0 and the mean period violates the resonance exclusion");
    PulseTrain t = periodic_train(n_pulses, mean_T, strength, fwhm);
    t.seed = seed;
    return t;
  }
  return detail::jittered_train_stream(n_pulses, mean_T, sigma_frac, seed, 0, avoid, strength, fwhm,
                                       revival_time_ps);
}

struct IntervalStats {
  std::size_t count;
  double mean;
  double sd;  // sample standard deviation (n - 1)
};

inline IntervalStats interval_stats(const TrainSet& set) {
  std::vector<double> all;
  for (const auto& t : set.trains)
    for (double d : t.intervals()) all.push_back(d);
  IntervalStats s{all.size(), 0.0, 0.0};
  if (all.empty()) return s;
  for (double d : all) s.mean += d;
  s.mean /= static_cast<double>(all.size());
  if (all.size() > 1) {
    double ss = 0.0;
    for (double d : all) ss += (d - s.mean) * (d - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(all.size() - 1));
  }
  return s;
}

inline constexpr double set_mean_tolerance = 0.05;
inline constexpr double set_sigma_tolerance = 0.15;
inline constexpr int max_set_attempts = 1000;

/// `count` jittered trains with seeds base_seed + i. The whole set is redrawn
/// (next RNG stream) until the pooled interval mean is within 5% of mean_T and
/// the pooled sample sd within 15% of sigma_frac * mean_T.
inline TrainSet jittered_set(int count, int n_pulses, double mean_T, double sigma_frac, std::uint64_t base_seed,
                             const std::optional<ResonanceAvoidance>& avoid, double strength, double fwhm,
                             double revival_time_ps) {
  if (count < 1) throw ConfigError("jittered_set: count must be >= 1");
  TrainSet set;
  set.design = avoid ? TrainDesign::JitterAvoiding : TrainDesign::Jitter;
  const double target_sd = sigma_frac * mean_T;
  int attempt = 0;
  for (; attempt < max_set_attempts; ++attempt) {
    set.trains.clear();
    for (int i = 0; i < count; ++i) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
      if (sigma_frac == 0.0) {
        set.trains.push_back(jittered_train(n_pulses, mean_T, 0.0, seed, avoid, strength, fwhm, revival_time_ps));
      } else {
        set.trains.push_back(detail::jittered_train_stream(n_pulses, mean_T, sigma_frac, seed,
                                                           static_cast<std::uint64_t>(attempt), avoid, strength,
                                                           fwhm, revival_time_ps));
      }
      set.trains.back().label = "jitter " + std::to_string(i);
    }
    if (sigma_frac == 0.0 || n_pulses < 2) break;
    const IntervalStats st = interval_stats(set);
    const bool mean_ok = std::abs(st.mean - mean_T) <= set_mean_tolerance * mean_T;
    const bool sd_ok = st.count < 2 || std::abs(st.sd - target_sd) <= set_sigma_tolerance * target_sd;
    if (mean_ok && sd_ok) break;
  }
  if (attempt == max_set_attempts)
    throw GenerationError("jittered_set: pooled interval statistics missed the (mean, sd) targets in " +
                          std::to_string(max_set_attempts) + " attempts");
  nlohmann::json avoid_json = nullptr;
  if (avoid) avoid_json = {{"J_set", avoid->J_set}, {"min_distance_over_Trev", avoid->min_distance_over_Trev}};
  set.parameters = {{"count", count},
                    {"n_pulses", n_pulses},
                    {"mean_T_over_Trev", mean_T},
                    {"sigma_frac", sigma_frac},
                    {"base_seed", base_seed},
                    {"set_attempt", attempt},
                    {"avoid", avoid_json},
                    {"P", strength},
                    {"fwhm_over_Trev", fwhm}};
  return set;
}

// Stream id for amplitude noise, distinct from the timing streams.
inline constexpr std::uint64_t amplitude_noise_stream = 0x414D504CULL;

/// Multiplies each strength by max(0, 1 + sigma * z), z standard normal.
inline PulseTrain amplitude_noise(const PulseTrain& train, double sigma_frac, std::uint64_t seed) {
  if (!(sigma_frac >= 0.0)) throw ConfigError("amplitude_noise: sigma must be >= 0");
  PulseTrain out = train;
  if (sigma_frac == 0.0) return out;
  Rng rng(seed, amplitude_noise_stream);
  for (auto& p : out.pulses) p.strength *= std::max(0.0, 1.0 + sigma_frac * rng.normal());
  return out;
}

// JSON: {label, seed, pulses: [{t_ps, t_over_Trev, P, fwhm_ps, fwhm_over_Trev}]}
inline nlohmann::json train_to_json(const PulseTrain& train, double revival_time_ps) {
  nlohmann::json pulses = nlohmann::json::array();
  for (const auto& p : train.pulses) {
    pulses.push_back({{"t_ps", p.time * revival_time_ps},
                      {"t_over_Trev", p.time},
                      {"P", p.strength},
                      {"fwhm_ps", p.fwhm * revival_time_ps},
                      {"fwhm_over_Trev", p.fwhm}});
  }
  nlohmann::json j = {{"label", train.label}, {"pulses", pulses}};
  j["seed"] = train.seed ? nlohmann::json(*train.seed) : nlohmann::json(nullptr);
  return j;
}

inline PulseTrain train_from_json(const nlohmann::json& j, double revival_time_ps) {
  PulseTrain train;
  train.label = j.value("label", "");
  if (j.contains("seed") && !j.at("seed").is_null()) train.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& pj : j.at("pulses")) {
    Pulse p;
    p.time = pj.contains("t_over_Trev") ? pj.at("t_over_Trev").get<double>()
                                        : pj.at("t_ps").get<double>() / revival_time_ps;
    p.strength = pj.at("P").get<double>();
    if (pj.contains("fwhm_over_Trev"))
      p.fwhm = pj.at("fwhm_over_Trev").get<double>();
    else
      p.fwhm = pj.value("fwhm_ps", 0.0) / revival_time_ps;
    train.pulses.push_back(p);
  }
  train.validate();
  return train;
}

inline nlohmann::json train_set_to_json(const TrainSet& set, double revival_time_ps) {
  nlohmann::json trains = nlohmann::json::array();
  for (const auto& t : set.trains) trains.push_back(train_to_json(t, revival_time_ps));
  return {{"design", std::string(to_string(set.design))}, {"parameters", set.parameters}, {"trains", trains}};
}

}  // namespace qkrot
