#pragma once

// Physical constants and unit conversions. Everything inside the library runs
// in reduced units: time in revival periods, energy in hcB, phases in radians.
// Conversions to ps / fs / 1/cm happen only where data enters or leaves.

namespace qkrot::units {

inline constexpr double pi = 3.14159265358979323846;

inline constexpr double speed_of_light_cm_per_ps = 0.0299792458;
inline constexpr double boltzmann_per_cm_per_K = 0.695034800;  // k_B / (hc)
inline constexpr double hbar_J_s = 1.054571817e-34;
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double speed_of_light_m_per_s = 299792458.0;

// Polarizability volume (A^3) to SI polarizability (C m^2 / V).
inline constexpr double polarizability_volume_to_si(double alpha_A3) {
  return 4.0 * pi * vacuum_permittivity * alpha_A3 * 1e-30;
}

inline constexpr double fs_to_ps(double fs) { return fs * 1e-3; }
inline constexpr double ps_to_fs(double ps) { return ps * 1e3; }

}  // namespace qkrot::units
