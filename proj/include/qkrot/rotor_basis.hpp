#pragma once

// Rigid linear rotor: spectrum, thermal statistics and the cos^2(theta)
// coupling that the laser kicks act through.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qkrot/errors.hpp"
#include "qkrot/units.hpp"

namespace qkrot {

enum class Parity { Odd, Even, Both };

inline std::string_view to_string(Parity p) {
  switch (p) {
    case Parity::Odd: return "odd";
    case Parity::Even: return "even";
    case Parity::Both: return "both";
  }
  return "?";
}

inline Parity parse_parity(std::string_view s) {
  if (s == "odd" || s == "odd-only") return Parity::Odd;
  if (s == "even" || s == "even-only") return Parity::Even;
  if (s == "both") return Parity::Both;
  throw ConfigError("unknown parity '" + std::string(s) + "' (expected odd, even or both)");
}

struct RotorSpec {
  double revival_time_ps = 11.67;
  Parity parity = Parity::Odd;
  double centrifugal_const_per_cm = 0.0;
  int j_max = 41;
  // Polarizability anisotropy in A^3; only needed for fluence -> P conversion.
  std::optional<double> polarizability_anisotropy_A3;

  // B = 1 / (2 c T_rev).
  double rot_constant_per_cm() const {
    return 1.0 / (2.0 * units::speed_of_light_cm_per_ps * revival_time_ps);
  }

  // D / B, the only combination the reduced-unit propagators need.
  double centrifugal_ratio() const { return centrifugal_const_per_cm / rot_constant_per_cm(); }

  bool allows(int J) const {
    if (J < 0 || J > j_max) return false;
    switch (parity) {
      case Parity::Odd: return J % 2 == 1;
      case Parity::Even: return J % 2 == 0;
      case Parity::Both: return true;
    }
    return false;
  }

  void validate() const {
    if (!(revival_time_ps > 0.0) || !std::isfinite(revival_time_ps))
      throw ConfigError("revival_time_ps must be a positive finite number");
    if (!(centrifugal_const_per_cm >= 0.0))
      throw ConfigError("centrifugal_const_per_cm must be >= 0");
    if (j_max < 1) throw ConfigError("j_max must be >= 1");
    if (polarizability_anisotropy_A3 && !(*polarizability_anisotropy_A3 > 0.0))
      throw ConfigError("polarizability_anisotropy_A3 must be positive when set");
  }
};

// 16O2: odd J only (nuclear spin statistics), T_rev = 11.67 ps.
inline RotorSpec oxygen16() {
  RotorSpec spec;
  spec.revival_time_ps = 11.67;
  spec.parity = Parity::Odd;
  spec.j_max = 41;
  return spec;
}

/// Rotational energy in units of hcB: J(J+1) - (D/B) J^2 (J+1)^2.
inline double rot_energy(int J, const RotorSpec& spec) {
  if (J < 0) throw DomainError("rot_energy: J must be >= 0, got " + std::to_string(J));
  const double jj = static_cast<double>(J) * (J + 1);
  return jj - spec.centrifugal_ratio() * jj * jj;
}

inline double rot_energy_per_cm(int J, const RotorSpec& spec) {
  return rot_energy(J, spec) * spec.rot_constant_per_cm();
}

// One M-subspace of one parity lattice: J = J0, J0+2, ..., all >= |m|.
struct BasisBlock {
  int m = 0;
  std::vector<int> j_list;

  std::size_t size() const { return j_list.size(); }

  void validate() const {
    if (j_list.empty()) throw ConfigError("basis block is empty");
    for (std::size_t i = 0; i < j_list.size(); ++i) {
      if (j_list[i] < std::abs(m))
        throw ConfigError("basis block contains J=" + std::to_string(j_list[i]) + " < |m|=" +
                          std::to_string(std::abs(m)));
      if (i > 0 && j_list[i] - j_list[i - 1] != 2)
        throw ConfigError("basis block J values must increase in steps of 2");
    }
  }

  // Index of J in j_list, or -1.
  int index_of(int J) const {
    if (j_list.empty() || J < j_list.front() || J > j_list.back() || (J - j_list.front()) % 2 != 0)
      return -1;
    return (J - j_list.front()) / 2;
  }

  friend bool operator==(const BasisBlock&, const BasisBlock&) = default;
};

/// Block of magnetic number m holding every allowed J of the given lattice
/// parity (0 = even, 1 = odd) up to spec.j_max.
inline BasisBlock make_block(const RotorSpec& spec, int m, int lattice_parity) {
  BasisBlock block;
  block.m = m;
  int j0 = std::abs(m);
  if (j0 % 2 != lattice_parity) ++j0;
  for (int J = j0; J <= spec.j_max; J += 2) {
    if (spec.allows(J)) block.j_list.push_back(J);
  }
  if (block.j_list.empty())
    throw ConfigError("no allowed J for m=" + std::to_string(m) + " below j_max=" +
                      std::to_string(spec.j_max));
  return block;
}

// Block that contains a given (J, M) basis state.
inline BasisBlock block_containing(const RotorSpec& spec, int J, int M) {
  if (!spec.allows(J)) throw ConfigError("J=" + std::to_string(J) + " not allowed by the rotor spec");
  if (std::abs(M) > J) throw ConfigError("|M| > J");
  return make_block(spec, M, J % 2);
}

// <J,M| cos^2 theta |J,M>
inline double cos2_diagonal(int J, int M) {
  const double j = J;
  const double m2 = static_cast<double>(M) * M;
  return 1.0 / 3.0 + (2.0 / 3.0) * (j * (j + 1.0) - 3.0 * m2) / ((2.0 * j - 1.0) * (2.0 * j + 3.0));
}

// <J+2,M| cos^2 theta |J,M>
inline double cos2_offdiagonal(int J, int M) {
  const double j = J;
  const double m2 = static_cast<double>(M) * M;
  const double num = ((j + 1.0) * (j + 1.0) - m2) * ((j + 2.0) * (j + 2.0) - m2);
  const double den = (2.0 * j + 1.0) * (2.0 * j + 3.0) * (2.0 * j + 3.0) * (2.0 * j + 5.0);
  return std::sqrt(num / den);
}

/// Tridiagonal (in lattice index) matrix of cos^2(theta) over block.j_list.
inline Eigen::MatrixXd cos2_matrix(const BasisBlock& block) {
  block.validate();
  const auto n = static_cast<Eigen::Index>(block.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int J = block.j_list[static_cast<std::size_t>(i)];
    c(i, i) = cos2_diagonal(J, block.m);
    if (i + 1 < n) {
      c(i, i + 1) = c(i + 1, i) = cos2_offdiagonal(J, block.m);
    }
  }
  return c;
}

struct ThermalState {
  int J;
  int M;
  double weight;
};

/// Boltzmann weights of every allowed (J, M), sorted by descending weight.
///
/// Whole J levels are kept (all 2J+1 sublevels together) in order of
/// decreasing per-state weight until the retained fraction reaches `cutoff`;
/// the retained list is then renormalized to 1. Throws ConfigError when the
/// partition sum has not converged inside the basis (the top J level alone
/// carries more than 1 - cutoff of the weight).
inline std::vector<ThermalState> thermal_weights(const RotorSpec& spec, double temperature_K,
                                                 double cutoff) {
  spec.validate();
  if (!(temperature_K > 0.0)) throw ConfigError("temperature must be > 0 K");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw ConfigError("thermal cutoff must lie in (0, 1)");

  struct Level {
    int J;
    double per_state;
  };
  std::vector<Level> levels;
  double e_min = 0.0;
  bool first = true;
  for (int J = 0; J <= spec.j_max; ++J) {
    if (!spec.allows(J)) continue;
    const double e = rot_energy_per_cm(J, spec);
    if (first || e < e_min) e_min = e;
    first = false;
    levels.push_back({J, 0.0});
  }
  if (levels.empty()) throw ConfigError("rotor spec allows no J <= j_max");

  const double kT = units::boltzmann_per_cm_per_K * temperature_K;
  double z = 0.0;
  for (auto& lv : levels) {
    lv.per_state = std::exp(-(rot_energy_per_cm(lv.J, spec) - e_min) / kT);
    z += (2.0 * lv.J + 1.0) * lv.per_state;
  }
  const Level& top = levels.back();
  if ((2.0 * top.J + 1.0) * top.per_state / z > 1.0 - cutoff) {
    throw ConfigError("thermal distribution not converged within j_max=" + std::to_string(spec.j_max) +
                      " (raise j_max, lower the temperature or check the rotational constant)");
  }

  std::stable_sort(levels.begin(), levels.end(),
                   [](const Level& a, const Level& b) { return a.per_state > b.per_state; });

  std::vector<ThermalState> out;
  double kept = 0.0;
  for (const auto& lv : levels) {
    if (lv.per_state <= 0.0) break;
    for (int M = -lv.J; M <= lv.J; ++M) out.push_back({lv.J, M, lv.per_state / z});
    kept += (2.0 * lv.J + 1.0) * lv.per_state / z;
    if (kept >= cutoff) break;
  }
  if (out.empty()) throw ConfigError("thermal cutoff excludes every state");
  for (auto& s : out) s.weight /= kept;
  return out;
}

/// Fluence integral of the squared field envelope, int E(t)^2 dt [V^2 s / m^2],
/// for a Gaussian pulse with peak intensity I0 [W/cm^2] and intensity FWHM.
inline double fluence_integral_from_peak_intensity(double peak_W_per_cm2, double fwhm_fs) {
  const double peak_W_per_m2 = peak_W_per_cm2 * 1e4;
  const double area_s = fwhm_fs * 1e-15 * std::sqrt(units::pi / (4.0 * std::log(2.0)));
  // I = c eps0 E^2 / 2 for envelope amplitude E.
  return 2.0 * peak_W_per_m2 * area_s / (units::speed_of_light_m_per_s * units::vacuum_permittivity);
}

/// P = delta_alpha / (4 hbar) * int E^2 dt.
inline double kick_strength_from_fluence(double fluence_V2s_per_m2, const RotorSpec& spec) {
  if (!spec.polarizability_anisotropy_A3)
    throw ConfigError("kick_strength_from_fluence needs polarizability_anisotropy_A3 in the rotor spec");
  if (fluence_V2s_per_m2 < 0.0) throw ConfigError("fluence integral must be >= 0");
  const double d_alpha = units::polarizability_volume_to_si(*spec.polarizability_anisotropy_A3);
  return d_alpha * fluence_V2s_per_m2 / (4.0 * units::hbar_J_s);
}

struct KickParams {
  double tau;  // effective Planck constant hbar T / I
  double K;    // stochasticity tau * P
};

// tau = hbar T / I = 2 pi T / T_rev with I = hbar / (4 pi c B).
inline KickParams kick_params(double T_over_Trev, double P) {
  if (!(T_over_Trev > 0.0)) throw ConfigError("kick period must be > 0");
  if (!(P >= 0.0)) throw ConfigError("kick strength must be >= 0");
  const double tau = 2.0 * units::pi * T_over_Trev;
  return {tau, tau * P};
}

inline KickParams kick_params(double T_ps, double P, const RotorSpec& spec) {
  return kick_params(T_ps / spec.revival_time_ps, P);
}

}  // namespace qkrot
