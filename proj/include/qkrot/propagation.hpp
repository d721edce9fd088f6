#pragma once

// Unitary building blocks and pulse-train evolution within one M-block.
//
// Free rotation is diagonal: exp(-i pi E_J dt) with E_J in hcB and dt in T_rev.
// A delta kick is exp(+i P cos^2 theta), applied through the eigenbasis of the
// real symmetric cos^2 matrix. A finite pulse is a Gaussian intensity
// envelope integrated by splitting (see finite_pulse).

#include <array>
#include <cmath>
#include <cstdio>
#include <complex>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "qkrot/errors.hpp"
#include "qkrot/pulse_train.hpp"
#include "qkrot/rotor_basis.hpp"
#include "qkrot/units.hpp"

namespace qkrot {

using cplx = std::complex<double>;

struct RotState {
  BasisBlock block;
  Eigen::VectorXcd amplitudes;

  static RotState basis_state(const BasisBlock& block, int J) {
    const int idx = block.index_of(J);
    if (idx < 0) throw ConfigError("J=" + std::to_string(J) + " is not in the basis block");
    RotState s{block, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(block.size()))};
    s.amplitudes(idx) = 1.0;
    return s;
  }

  double norm_squared() const { return amplitudes.squaredNorm(); }

  // Per-J probabilities indexed by J = 0..j_max.
  std::vector<double> populations(int j_max) const {
    std::vector<double> p(static_cast<std::size_t>(j_max) + 1, 0.0);
    for (std::size_t i = 0; i < block.size(); ++i) {
      p[static_cast<std::size_t>(block.j_list[i])] += std::norm(amplitudes(static_cast<Eigen::Index>(i)));
    }
    return p;
  }
};

struct Trajectory {
  std::vector<RotState> states_after_kick;                 // index n = 0..N, empty if not kept
  std::vector<std::vector<double>> populations_after_kick;  // index n = 0..N, per J
};

struct KickMode {
  enum class Kind { Delta, Finite };
  Kind kind = Kind::Delta;
  int n_sub = 64;

  static KickMode delta() { return {Kind::Delta, 0}; }
  static KickMode finite(int n_sub = 64) { return {Kind::Finite, n_sub}; }

  std::string name() const { return kind == Kind::Delta ? "delta" : "finite"; }
};

namespace detail {

// exp(-i pi E_J dt) for any sign of dt.
inline Eigen::VectorXcd free_phases(double dt_over_Trev, const BasisBlock& block, const RotorSpec& spec) {
  Eigen::VectorXcd d(static_cast<Eigen::Index>(block.size()));
  for (std::size_t i = 0; i < block.size(); ++i) {
    // Reduce in half-turns first; with D = 0 and dt = T_rev this is exactly 0.
    const double half_turns = std::fmod(rot_energy(block.j_list[i], spec) * dt_over_Trev, 2.0);
    const double phase = -units::pi * half_turns;
    d(static_cast<Eigen::Index>(i)) = cplx(std::cos(phase), std::sin(phase));
  }
  return d;
}

}  // namespace detail

/// Diagonal of exp(-i pi E_J dt), dt in units of T_rev.
inline Eigen::VectorXcd free_propagator(double dt_over_Trev, const BasisBlock& block, const RotorSpec& spec) {
  if (!(dt_over_Trev >= 0.0)) throw ConfigError("free_propagator: dt must be >= 0");
  return detail::free_phases(dt_over_Trev, block, spec);
}

// Eigen-decomposition of the cos^2 matrix of a block, reused by every kick.
struct CosineEigenbasis {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;

  explicit CosineEigenbasis(const BasisBlock& block) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cos2_matrix(block));
    if (solver.info() != Eigen::Success) throw NumericalError("cos^2 eigendecomposition failed");
    values = solver.eigenvalues();
    vectors = solver.eigenvectors();
  }

  Eigen::MatrixXcd exp_i(double P) const {
    Eigen::VectorXcd phases(values.size());
    for (Eigen::Index k = 0; k < values.size(); ++k) phases(k) = std::polar(1.0, P * values(k));
    const Eigen::MatrixXcd v = vectors.cast<cplx>();
    return v * phases.asDiagonal() * v.transpose();
  }
};

/// exp(+i P cos^2 theta) on the block.
inline Eigen::MatrixXcd delta_kick(double P, const BasisBlock& block) {
  if (!(P >= 0.0)) throw ConfigError("delta_kick: P must be >= 0");
  return CosineEigenbasis(block).exp_i(P);
}

// Envelope truncation, in units of FWHM on each side of the peak.
inline constexpr double pulse_half_window_in_fwhm = 2.5;
inline constexpr int max_substeps = 1 << 22;

namespace detail {

// 25 Strang-step weights of the 6th-order Suzuki fractal composition.
inline const std::vector<double>& suzuki6_weights() {
  static const std::vector<double> weights = [] {
    auto level = [](const std::vector<double>& inner, int order) {
      const double s = 1.0 / (4.0 - std::pow(4.0, 1.0 / (order + 1)));
      std::vector<double> out;
      for (double outer : {s, s, 1.0 - 4.0 * s, s, s})
        for (double w : inner) out.push_back(outer * w);
      return out;
    };
    return level(level({1.0}, 2), 4);
  }();
  return weights;
}

inline Eigen::MatrixXcd finite_pulse_impl(double P, double fwhm, int n_sub, const BasisBlock& block,
                                          const RotorSpec& spec, const CosineEigenbasis& eig) {
  if (fwhm == 0.0) return eig.exp_i(P);
  const double half_window = pulse_half_window_in_fwhm * fwhm;
  const double dt = 2.0 * half_window / n_sub;
  if (!(dt > 0.0) || -half_window + dt == -half_window)
    throw ConfigError("finite_pulse: n_sub=" + std::to_string(n_sub) + " underflows the substep");

  // Stage list: free advance before each kick, then the kick weight at the
  // stage midpoint of the Gaussian intensity envelope.
  const auto& weights = suzuki6_weights();
  const double inv_two_sigma2 = 4.0 * std::log(2.0) / (fwhm * fwhm);
  std::vector<std::pair<double, double>> stages;  // (free dt before, kick weight)
  stages.reserve(static_cast<std::size_t>(n_sub) * weights.size());
  double t = -half_window;
  double pending = 0.0;
  double total = 0.0;
  for (int k = 0; k < n_sub; ++k) {
    for (double c : weights) {
      const double h = c * dt;
      t += 0.5 * h;
      pending += 0.5 * h;
      const double w = h * std::exp(-t * t * inv_two_sigma2);
      stages.emplace_back(pending, w);
      total += w;
      t += 0.5 * h;
      pending = 0.5 * h;
    }
  }
  const double trailing = pending;

  // Work in the cos^2 eigenbasis: kicks are diagonal there.
  const auto n = static_cast<Eigen::Index>(block.size());
  const Eigen::MatrixXcd v = eig.vectors.cast<cplx>();
  const Eigen::MatrixXcd vt = v.transpose();
  // Reference frame: kick centred at t = 0, so U_eff = F(-w/2) U F(-w/2).
  // The leading F(-w/2) and the first free step combine; so do the trailing ones.
  Eigen::MatrixXcd w_basis = vt;
  bool first = true;
  Eigen::VectorXcd phases(n);
  for (const auto& [free_dt, weight] : stages) {
    const double advance = first ? free_dt - half_window : free_dt;
    first = false;
    if (advance != 0.0) {
      w_basis = vt * (free_phases(advance, block, spec).asDiagonal() * (v * w_basis));
    }
    const double p = P * weight / total;
    for (Eigen::Index j = 0; j < n; ++j) phases(j) = std::polar(1.0, p * eig.values(j));
    w_basis = phases.asDiagonal() * w_basis;
  }
  const double tail = trailing - half_window;
  Eigen::MatrixXcd u = free_phases(tail, block, spec).asDiagonal() * (v * w_basis);
  // ~1600 stacked factors leave a few 1e-12 of non-unitarity; one
  // Newton-Schulz step pulls it back to round-off.
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
  return u * (1.5 * id - 0.5 * (u.adjoint() * u));
}

}  // namespace detail

/// Propagator of one Gaussian pulse of total strength P and intensity FWHM
/// (units of T_rev), truncated at +-2.5 FWHM, expressed in the frame of a kick
/// at the pulse centre: as fwhm -> 0 it tends to delta_kick(P).
///
/// The window is cut into n_sub substeps. Each substep is a 6th-order Suzuki
/// composition of 25 Strang steps (half free, kick, half free); kick weights
/// are envelope samples at the stage midpoints, renormalized so that the
/// strengths sum to P exactly. fwhm = 0 returns delta_kick(P).
inline Eigen::MatrixXcd finite_pulse(double P, double fwhm_over_Trev, int n_sub, const BasisBlock& block,
                                     const RotorSpec& spec) {
  if (!(P >= 0.0)) throw ConfigError("finite_pulse: P must be >= 0");
  if (!(fwhm_over_Trev >= 0.0)) throw ConfigError("finite_pulse: fwhm must be >= 0");
  if (n_sub < 1 || n_sub > max_substeps) throw ConfigError("finite_pulse: n_sub must be in [1, 2^22]");
  return detail::finite_pulse_impl(P, fwhm_over_Trev, n_sub, block, spec, CosineEigenbasis(block));
}

/// Kick operators keyed by (block, pulse, mode). Concurrent lookups take a
/// shared lock; a miss builds outside the lock and inserts under a unique one.
class PropagatorCache {
 public:
  explicit PropagatorCache(RotorSpec spec) : spec_(std::move(spec)) {}

  const RotorSpec& spec() const { return spec_; }

  std::shared_ptr<const Eigen::MatrixXcd> kick(const BasisBlock& block, const Pulse& pulse, const KickMode& mode) {
    const bool finite = mode.kind == KickMode::Kind::Finite && pulse.fwhm > 0.0;
    const Key key{block.m, block.j_list.front(), block.j_list.back(), bits(pulse.strength),
                  finite ? bits(pulse.fwhm) : 0u, finite ? mode.n_sub : 0};
    {
      std::shared_lock lock(mutex_);
      if (auto it = kicks_.find(key); it != kicks_.end()) return it->second;
    }
    auto basis = eigenbasis(block);
    auto op = std::make_shared<const Eigen::MatrixXcd>(
        finite ? detail::finite_pulse_impl(pulse.strength, pulse.fwhm, mode.n_sub, block, spec_, *basis)
               : basis->exp_i(pulse.strength));
    std::unique_lock lock(mutex_);
    return kicks_.try_emplace(key, std::move(op)).first->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return kicks_.size();
  }

 private:
  using Key = std::tuple<int, int, int, std::uint64_t, std::uint64_t, int>;
  using BlockKey = std::tuple<int, int, int>;

  static std::uint64_t bits(double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof u);
    return u;
  }

  std::shared_ptr<const CosineEigenbasis> eigenbasis(const BasisBlock& block) {
    const BlockKey key{block.m, block.j_list.front(), block.j_list.back()};
    {
      std::shared_lock lock(mutex_);
      if (auto it = bases_.find(key); it != bases_.end()) return it->second;
    }
    auto basis = std::make_shared<const CosineEigenbasis>(block);
    std::unique_lock lock(mutex_);
    return bases_.try_emplace(key, std::move(basis)).first->second;
  }

  RotorSpec spec_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const Eigen::MatrixXcd>> kicks_;
  std::map<BlockKey, std::shared_ptr<const CosineEigenbasis>> bases_;
};

inline constexpr double default_leakage_threshold = 1e-6;
// Lattice sites at the top of the basis watched by the leakage guard.
inline constexpr int leakage_guard_sites = 2;

struct EvolveOptions {
  // Abort when the population of the top lattice sites exceeds this;
  // infinity disables the guard.
  double leakage_threshold = default_leakage_threshold;
  bool keep_states = true;
};

inline double top_sites_population(const RotState& s) {
  const auto n = static_cast<Eigen::Index>(s.block.size());
  const Eigen::Index first = std::max<Eigen::Index>(0, n - leakage_guard_sites);
  return s.amplitudes.segment(first, n - first).squaredNorm();
}

/// Free evolution between pulses alternating with kick operators; records the
/// state and per-J populations after every kick (entry 0 is the initial state).
inline Trajectory evolve_train(const RotState& initial, const PulseTrain& train, const KickMode& mode,
                               PropagatorCache& cache, const EvolveOptions& options = {}) {
  train.validate();
  const RotorSpec& spec = cache.spec();
  if (std::abs(initial.norm_squared() - 1.0) > 1e-9) throw ConfigError("evolve_train: initial state is not normalized");
  Trajectory traj;
  RotState psi = initial;
  auto record = [&] {
    if (options.keep_states) traj.states_after_kick.push_back(psi);
    traj.populations_after_kick.push_back(psi.populations(spec.j_max));
  };
  record();
  for (std::size_t n = 0; n < train.size(); ++n) {
    const Pulse& pulse = train.pulses[n];
    if (n > 0) {
      const double gap = pulse.time - train.pulses[n - 1].time;
      psi.amplitudes = detail::free_phases(gap, psi.block, spec).asDiagonal() * psi.amplitudes;
    }
    psi.amplitudes = *cache.kick(psi.block, pulse, mode) * psi.amplitudes;
    const double leaked = top_sites_population(psi);
    if (leaked > options.leakage_threshold) {
      const int kick = static_cast<int>(n) + 1;
      char buf[160];
      std::snprintf(buf, sizeof buf, "leakage guard tripped after kick %d: population %.3g in the top %d lattice sites (j_max=%d)",
                    kick, leaked, leakage_guard_sites, spec.j_max);
      throw LeakageError(buf, kick, leaked);
    }
    record();
  }
  return traj;
}

inline Trajectory evolve_train(const RotState& initial, const PulseTrain& train, const KickMode& mode,
                               const RotorSpec& spec, const EvolveOptions& options = {}) {
  PropagatorCache cache(spec);
  return evolve_train(initial, train, mode, cache, options);
}

}  // namespace qkrot
