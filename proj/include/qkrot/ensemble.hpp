#pragma once

// Thermal ensemble x train set -> averaged kick-by-kick P_J(n).
//
// Every thermal member |J0, M0> is propagated as a pure state through every
// train of the set. Members with +M and -M evolve identically (cos^2 depends
// on M^2), so by default they are merged into one |M| run with summed weight.
// Work items run in parallel; the reduction always visits them in the same
// order (member group, then train), so results do not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "qkrot/errors.hpp"
#include "qkrot/propagation.hpp"
#include "qkrot/pulse_train.hpp"
#include "qkrot/rotor_basis.hpp"

namespace qkrot {

struct EnsembleMember {
  int J;
  int M;
  double weight;
  RotState state;
};

/// One basis state |J, M> per retained thermal state, with its Boltzmann weight.
inline std::vector<EnsembleMember> initial_ensemble(const RotorSpec& spec, double temperature_K, double cutoff) {
  std::vector<EnsembleMember> out;
  for (const auto& ts : thermal_weights(spec, temperature_K, cutoff)) {
    out.push_back({ts.J, ts.M, ts.weight, RotState::basis_state(block_containing(spec, ts.J, ts.M), ts.J)});
  }
  return out;
}

struct EnsembleOptions {
  KickMode mode = KickMode::finite();
  bool use_m_symmetry = true;
  unsigned workers = 0;  // 0: hardware concurrency
  bool keep_per_train = false;
  double leakage_threshold = default_leakage_threshold;
};

struct EnsembleResult {
  // Rows: kick index n = 0..N. Columns: J = 0..j_max.
  Eigen::MatrixXd p_of_J_after_kick;
  RotorSpec spec;
  TrainSet train_set;
  KickMode mode;
  std::optional<double> temperature_K;
  std::optional<double> thermal_cutoff;
  std::size_t member_count = 0;
  std::size_t trajectories = 0;
  // Per-train distributions (thermally averaged), only with keep_per_train.
  std::vector<Eigen::MatrixXd> per_train;

  int kicks() const { return static_cast<int>(p_of_J_after_kick.rows()) - 1; }

  std::vector<double> distribution(int kick) const {
    const Eigen::VectorXd row = p_of_J_after_kick.row(kick).transpose();
    return {row.data(), row.data() + row.size()};
  }

  std::vector<double> final_distribution() const { return distribution(kicks()); }
};

namespace detail {

struct MemberGroup {
  int J;
  int M;
  double weight;
};

inline std::vector<MemberGroup> group_members(const std::vector<EnsembleMember>& members, bool use_m_symmetry) {
  std::vector<MemberGroup> groups;
  for (const auto& m : members) {
    const int key_m = use_m_symmetry ? std::abs(m.M) : m.M;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const MemberGroup& g) { return g.J == m.J && g.M == key_m; });
    if (it != groups.end()) {
      it->weight += m.weight;
    } else {
      groups.push_back({m.J, key_m, m.weight});
    }
  }
  return groups;
}

}  // namespace detail

/// Propagates every (member, train) pair and averages the populations with
/// weight (Boltzmann weight) x (1 / number of trains).
inline EnsembleResult run_ensemble(const std::vector<EnsembleMember>& members, const TrainSet& train_set,
                                   const RotorSpec& spec, const EnsembleOptions& options = {},
                                   PropagatorCache* shared_cache = nullptr) {
  spec.validate();
  train_set.validate();
  if (members.empty()) throw ConfigError("run_ensemble: ensemble is empty");
  for (const auto& m : members) {
    if (!spec.allows(m.J) || m.state.block.j_list.back() > spec.j_max)
      throw ConfigError("run_ensemble: ensemble member inconsistent with the rotor spec");
  }

  std::optional<PropagatorCache> local_cache;
  if (shared_cache == nullptr) local_cache.emplace(spec);
  PropagatorCache& cache = shared_cache ? *shared_cache : *local_cache;
  if (cache.spec().j_max != spec.j_max || cache.spec().centrifugal_ratio() != spec.centrifugal_ratio())
    throw ConfigError("run_ensemble: propagator cache was built for a different rotor spec");

  const auto groups = detail::group_members(members, options.use_m_symmetry);
  std::vector<RotState> initial;
  initial.reserve(groups.size());
  for (const auto& g : groups) initial.push_back(RotState::basis_state(block_containing(spec, g.J, g.M), g.J));

  const std::size_t n_trains = train_set.trains.size();
  const std::size_t n_tasks = groups.size() * n_trains;
  const auto rows = static_cast<Eigen::Index>(train_set.pulses_per_train() + 1);
  const auto cols = static_cast<Eigen::Index>(spec.j_max + 1);
  std::vector<Eigen::MatrixXd> task_pops(n_tasks);
  std::vector<std::exception_ptr> task_errors(n_tasks);

  EvolveOptions evolve_options;
  evolve_options.keep_states = false;
  evolve_options.leakage_threshold = options.leakage_threshold;

  auto run_task = [&](std::size_t task) {
    const std::size_t g = task / n_trains;
    const std::size_t t = task % n_trains;
    try {
      const Trajectory traj = evolve_train(initial[g], train_set.trains[t], options.mode, cache, evolve_options);
      Eigen::MatrixXd pops(rows, cols);
      for (Eigen::Index n = 0; n < rows; ++n)
        for (Eigen::Index j = 0; j < cols; ++j)
          pops(n, j) = traj.populations_after_kick[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
      task_pops[task] = std::move(pops);
    } catch (const LeakageError& e) {
      task_errors[task] = std::make_exception_ptr(LeakageError(
          std::string(e.what()) + " [member J=" + std::to_string(groups[g].J) + " M=" + std::to_string(groups[g].M) +
              ", train " + std::to_string(t) + " '" + train_set.trains[t].label + "']",
          e.kick_index(), e.leaked_population()));
    } catch (...) {
      task_errors[task] = std::current_exception();
    }
  };

  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_tasks));
  if (workers <= 1) {
    for (std::size_t task = 0; task < n_tasks; ++task) run_task(task);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t task = next++; task < n_tasks; task = next++) run_task(task);
      });
    }
  }
  for (const auto& err : task_errors)
    if (err) std::rethrow_exception(err);

  EnsembleResult result;
  result.spec = spec;
  result.train_set = train_set;
  result.mode = options.mode;
  result.member_count = members.size();
  result.trajectories = n_tasks;
  result.p_of_J_after_kick = Eigen::MatrixXd::Zero(rows, cols);
  if (options.keep_per_train) result.per_train.assign(n_trains, Eigen::MatrixXd::Zero(rows, cols));
  const double train_weight = 1.0 / static_cast<double>(n_trains);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t t = 0; t < n_trains; ++t) {
      const Eigen::MatrixXd& pops = task_pops[g * n_trains + t];
      result.p_of_J_after_kick += (groups[g].weight * train_weight) * pops;
      if (options.keep_per_train) result.per_train[t] += groups[g].weight * pops;
    }
  }
  return result;
}

inline EnsembleResult run_ensemble(const RotorSpec& spec, double temperature_K, double cutoff,
                                   const TrainSet& train_set, const EnsembleOptions& options = {},
                                   PropagatorCache* shared_cache = nullptr) {
  const auto members = initial_ensemble(spec, temperature_K, cutoff);
  EnsembleResult r = run_ensemble(members, train_set, spec, options, shared_cache);
  r.temperature_K = temperature_K;
  r.thermal_cutoff = cutoff;
  return r;
}

struct EnergyPoint {
  int kick;
  double hcB;
  double per_cm;
};

/// E(n) = sum_J E_J P_J(n).
inline std::vector<EnergyPoint> absorbed_energy_curve(const EnsembleResult& result, const RotorSpec& spec) {
  std::vector<EnergyPoint> out;
  const double B = spec.rot_constant_per_cm();
  for (Eigen::Index n = 0; n < result.p_of_J_after_kick.rows(); ++n) {
    double e = 0.0;
    for (Eigen::Index J = 0; J < result.p_of_J_after_kick.cols(); ++J) {
      const double p = result.p_of_J_after_kick(n, J);
      if (p != 0.0) e += rot_energy(static_cast<int>(J), spec) * p;
    }
    out.push_back({static_cast<int>(n), e, e * B});
  }
  return out;
}

}  // namespace qkrot
