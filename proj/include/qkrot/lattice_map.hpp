#pragma once

// Tight-binding picture of the kicked rotor: on-site energies tan(phi_J) of
// the rotational lattice and the fractional-resonance map used to pick
// pulse-train periods.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "qkrot/errors.hpp"
#include "qkrot/rotor_basis.hpp"
#include "qkrot/units.hpp"

namespace qkrot {

// Reduce x (in units of pi) modulo 1 into (-1/2, 1/2].
inline double reduce_half_turns(double x) { return x - std::ceil(x - 0.5); }

/// phi_J = (pi/2) (eps - J(J+1)) T/T_rev, reduced modulo pi into (-pi/2, pi/2].
/// eps is the quasienergy in units of hcB.
inline double phi_J(double quasienergy_over_hcB, int J, double T_over_Trev) {
  if (J < 0) throw DomainError("phi_J: J must be >= 0");
  const double jj = static_cast<double>(J) * (J + 1);
  // Phase in units of pi, so integer multiples reduce exactly.
  const double x = 0.5 * (quasienergy_over_hcB - jj) * T_over_Trev;
  return units::pi * reduce_half_turns(x);
}

inline constexpr double onsite_pole_tolerance = 1e-9;

/// tan(phi) for phi already reduced into (-pi/2, pi/2]. Throws PoleError next
/// to the pole; the caller is expected to perturb the quasienergy.
inline double onsite_energy(double phi) {
  if (std::abs(units::pi / 2 - std::abs(phi)) < onsite_pole_tolerance)
    throw PoleError("onsite_energy: phi is within 1e-9 of pi/2 (exact resonance hit)");
  return std::tan(phi);
}

struct OnsiteSite {
  int J;
  double phi;
  double energy;  // T_J = tan(phi_J)
};

struct LatticeProfile {
  double quasienergy_over_hcB;
  double T_over_Trev;
  std::vector<OnsiteSite> onsite;
};

inline LatticeProfile lattice_profile(double quasienergy_over_hcB, double T_over_Trev,
                                      const RotorSpec& spec) {
  LatticeProfile profile{quasienergy_over_hcB, T_over_Trev, {}};
  for (int J = 0; J <= spec.j_max; ++J) {
    if (!spec.allows(J)) continue;
    const double phi = phi_J(quasienergy_over_hcB, J, T_over_Trev);
    profile.onsite.push_back({J, phi, onsite_energy(phi)});
  }
  return profile;
}

// Smallest lattice period p <= max_period (in sites) of the on-site phases
// for a rational period T/T_rev = num/den, compared exactly in integer
// arithmetic; 0 if none. Quasienergy is taken as 0.
inline int onsite_period(long num, long den, const std::vector<int>& j_sites, int max_period) {
  if (den <= 0) throw ConfigError("onsite_period: denominator must be positive");
  // phi_J / pi mod 1 = -J(J+1) num / (2 den) mod 1
  const long modulus = 2 * den;
  std::vector<long> key;
  key.reserve(j_sites.size());
  for (int J : j_sites) {
    const long jj = static_cast<long>(J) * (J + 1);
    key.push_back(((-(jj % modulus) * (num % modulus)) % modulus + modulus) % modulus);
  }
  const int n = static_cast<int>(key.size());
  for (int p = 1; p <= max_period && p < n; ++p) {
    bool periodic = true;
    for (int i = 0; i + p < n && periodic; ++i) periodic = key[i] == key[i + p];
    if (periodic) return p;
  }
  return 0;
}

struct RunsTestResult {
  int n_positive;
  int n_negative;
  int runs;
  double z;
  double p_value;  // two-sided, normal approximation
};

/// Wald-Wolfowitz runs test on the signs of a sequence (zeros skipped).
inline RunsTestResult runs_test(std::span<const double> values) {
  int pos = 0, neg = 0, runs = 0, last = 0;
  for (double v : values) {
    if (v == 0.0) continue;
    const int s = v > 0.0 ? 1 : -1;
    (s > 0 ? pos : neg)++;
    if (s != last) ++runs;
    last = s;
  }
  const double n = pos + neg;
  if (pos == 0 || neg == 0) return {pos, neg, runs, 0.0, 0.0};
  const double mu = 2.0 * pos * neg / n + 1.0;
  const double var = (mu - 1.0) * (mu - 2.0) / (n - 1.0);
  const double z = var > 0.0 ? (runs - mu) / std::sqrt(var) : 0.0;
  return {pos, neg, runs, z, std::erfc(std::abs(z) / std::sqrt(2.0))};
}

// Period T/T_rev at which sites J and J+2 are in phase:
// Delta phi_J = pi (2J+3) T/T_rev = m pi.
struct ResonanceMarker {
  int J;
  int order_m;
  double T_over_Trev;

  int denominator() const { return 2 * J + 3; }
  friend bool operator==(const ResonanceMarker&, const ResonanceMarker&) = default;
};

inline ResonanceMarker make_marker(int J, int m) {
  return {J, m, static_cast<double>(m) / (2 * J + 3)};
}

/// Markers m/(2J+3) for every m in [m_lo, m_hi].
inline std::vector<ResonanceMarker> resonance_times(int J, int m_lo, int m_hi) {
  if (J < 0) throw DomainError("resonance_times: J must be >= 0");
  std::vector<ResonanceMarker> out;
  for (int m = m_lo; m <= m_hi; ++m) out.push_back(make_marker(J, m));
  return out;
}

// Exact ordering by (T, J): compares m1/q1 against m2/q2 by cross-multiplying.
inline bool marker_less(const ResonanceMarker& a, const ResonanceMarker& b) {
  const long lhs = static_cast<long>(a.order_m) * b.denominator();
  const long rhs = static_cast<long>(b.order_m) * a.denominator();
  if (lhs != rhs) return lhs < rhs;
  return a.J < b.J;
}

/// Every marker of an allowed J <= J_max with T/T_rev in [T_lo, T_hi],
/// sorted by (T, J). The interval must be nonempty and inside (0, 1].
inline std::vector<ResonanceMarker> resonance_map(int J_max, double T_lo, double T_hi,
                                                  Parity parity = Parity::Odd) {
  if (!(T_lo <= T_hi) || T_hi <= 0.0 || T_lo > 1.0 || !std::isfinite(T_lo) || !std::isfinite(T_hi))
    throw ConfigError("resonance_map: interval must be nonempty and inside (0, 1]");
  if (J_max < 0) throw ConfigError("resonance_map: J_max must be >= 0");
  constexpr double eps = 1e-12;
  std::vector<ResonanceMarker> out;
  for (int J = 0; J <= J_max; ++J) {
    if (parity == Parity::Odd && J % 2 == 0) continue;
    if (parity == Parity::Even && J % 2 == 1) continue;
    const int q = 2 * J + 3;
    const int m_lo = std::max(1, static_cast<int>(std::ceil(T_lo * q - eps)));
    const int m_hi = std::min(q, static_cast<int>(std::floor(T_hi * q + eps)));
    for (int m = m_lo; m <= m_hi; ++m) out.push_back(make_marker(J, m));
  }
  std::sort(out.begin(), out.end(), marker_less);
  return out;
}

struct NearestResonance {
  double distance_over_Trev;
  double distance_ps;
  ResonanceMarker marker;
};

/// Distance from T to the closest marker m/(2J+3) over all J in J_set and all
/// integer m.
inline NearestResonance nearest_resonance_distance(double T_over_Trev, std::span<const int> J_set,
                                                   double revival_time_ps) {
  if (J_set.empty()) throw ConfigError("nearest_resonance_distance: J set is empty");
  NearestResonance best{std::numeric_limits<double>::infinity(), 0.0, {}};
  for (int J : J_set) {
    if (J < 0) throw DomainError("nearest_resonance_distance: J must be >= 0");
    const int q = 2 * J + 3;
    const auto m = static_cast<int>(std::llround(T_over_Trev * q));
    for (int cand : {m - 1, m, m + 1}) {
      const ResonanceMarker mk = make_marker(J, cand);
      const double d = std::abs(T_over_Trev - mk.T_over_Trev);
      if (d < best.distance_over_Trev) best = {d, 0.0, mk};
    }
  }
  best.distance_ps = best.distance_over_Trev * revival_time_ps;
  return best;
}

// CSV columns: J, m, T_over_Trev, T_ps
inline void write_resonance_csv(std::ostream& os, const std::vector<ResonanceMarker>& markers,
                                double revival_time_ps) {
  char buf[128];
  os << "J,m,T_over_Trev,T_ps\n";
  for (const auto& mk : markers) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.12f,%.9f\n", mk.J, mk.order_m, mk.T_over_Trev,
                  mk.T_over_Trev * revival_time_ps);
    os << buf;
  }
}

}  // namespace qkrot
