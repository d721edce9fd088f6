#include <cmath>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "qkrot/propagation.hpp"

using namespace qkrot;

namespace {

constexpr double fwhm130 = 130.0 / 11670.0;

RotorSpec spec_jmax(int j_max) {
  RotorSpec s = oxygen16();
  s.j_max = j_max;
  return s;
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

// exp(i P C) straight from the matrix exponential.
Eigen::MatrixXcd kick_oracle(double P, const BasisBlock& b) {
  const Eigen::MatrixXcd a = cplx(0.0, P) * cos2_matrix(b).cast<cplx>();
  return a.exp();
}

// Time-ordered product of exp(-i h H(t)) at step midpoints over the truncated
// window, with H = pi E - P g(t) C and g normalized on the window; then moved
// into the frame of a kick at the pulse centre. Second order in h.
Eigen::MatrixXcd finite_oracle(double P, double fwhm, const BasisBlock& b, const RotorSpec& spec, int steps) {
  const auto n = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) E(i, i) = M_PI * rot_energy(b.j_list[static_cast<std::size_t>(i)], spec);
  const Eigen::MatrixXcd C = cos2_matrix(b).cast<cplx>();
  const double hw = 2.5 * fwhm;
  const double h = 2.0 * hw / steps;
  const double a = 4.0 * std::log(2.0) / (fwhm * fwhm);
  double norm = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = -hw + (k + 0.5) * h;
    norm += h * std::exp(-a * t * t);
  }
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(n, n);
  for (int k = 0; k < steps; ++k) {
    const double t = -hw + (k + 0.5) * h;
    const Eigen::MatrixXcd H = E - (P * std::exp(-a * t * t) / norm) * C;
    U = (cplx(0.0, -h) * H).exp() * U;
  }
  const Eigen::MatrixXcd back = (cplx(0.0, hw) * E).exp();
  return back * U * back;
}

}  // namespace

TEST(FreePropagator, IdentityAtRevivalAndZero) {
  const auto spec = oxygen16();
  const auto b = make_block(spec, 0, 1);
  for (double dt : {0.0, 1.0, 2.0}) {
    const auto d = free_propagator(dt, b, spec);
    for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_NEAR(std::abs(d(i) - 1.0), 0.0, 1e-15) << dt;
  }
  EXPECT_THROW(free_propagator(-0.1, b, spec), ConfigError);
}

TEST(FreePropagator, HalfRevivalSigns) {
  const auto spec = oxygen16();
  const auto b = make_block(spec, 1, 1);
  const auto d = free_propagator(0.5, b, spec);
  // exp(-i pi J(J+1)/2): J=1 -> -1, J=3 -> +1, J=5 -> -1
  EXPECT_NEAR(d(b.index_of(1)).real(), -1.0, 1e-15);
  EXPECT_NEAR(d(b.index_of(3)).real(), 1.0, 1e-15);
  EXPECT_NEAR(d(b.index_of(5)).real(), -1.0, 1e-15);
}

TEST(FreePropagator, PhaseMatchesEnergy) {
  const auto spec = oxygen16();
  const auto b = make_block(spec, 0, 1);
  const double dt = 0.2873;
  const auto d = free_propagator(dt, b, spec);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const int J = b.j_list[i];
    const cplx expect = std::polar(1.0, -M_PI * J * (J + 1.0) * dt);
    EXPECT_NEAR(std::abs(d(static_cast<Eigen::Index>(i)) - expect), 0.0, 1e-11);
  }
}

TEST(DeltaKick, ZeroStrengthIsIdentity) {
  const auto b = make_block(oxygen16(), 0, 1);
  const auto U = delta_kick(0.0, b);
  EXPECT_LT(max_abs(U - Eigen::MatrixXcd::Identity(U.rows(), U.cols())), 1e-14);
  EXPECT_THROW(delta_kick(-1.0, b), ConfigError);
}

TEST(DeltaKick, UnitaryAndMatchesMatrixExponential) {
  const auto spec = spec_jmax(41);
  for (int M : {0, 3, 10}) {
    const auto b = make_block(spec, M, 1);
    const auto U = delta_kick(8.0, b);
    const auto I = Eigen::MatrixXcd::Identity(U.rows(), U.cols());
    EXPECT_LT(max_abs(U.adjoint() * U - I), 1e-12);
    EXPECT_LT(max_abs(U - kick_oracle(8.0, b)), 1e-11);
    // symmetric: C is real symmetric
    EXPECT_LT(max_abs(U - U.transpose()), 1e-12);
  }
}

TEST(DeltaKick, OneByOneBlock) {
  const BasisBlock b{0, {0}};
  const auto U = delta_kick(3.0, b);
  EXPECT_NEAR(std::abs(U(0, 0) - std::polar(1.0, 1.0)), 0.0, 1e-15);
}

TEST(FinitePulse, ZeroWidthIsDelta) {
  const auto spec = spec_jmax(31);
  const auto b = make_block(spec, 1, 1);
  EXPECT_EQ(finite_pulse(6.0, 0.0, 64, b, spec), delta_kick(6.0, b));
  EXPECT_THROW(finite_pulse(6.0, -0.1, 64, b, spec), ConfigError);
  EXPECT_THROW(finite_pulse(6.0, fwhm130, 0, b, spec), ConfigError);
}

TEST(FinitePulse, SubstepConvergence) {
  const auto spec = spec_jmax(41);
  for (int M : {0, 5}) {
    const auto b = make_block(spec, M, 1);
    const auto u64 = finite_pulse(8.0, fwhm130, 64, b, spec);
    const auto u128 = finite_pulse(8.0, fwhm130, 128, b, spec);
    EXPECT_LT(max_abs(u64 - u128), 1e-8);
    const auto I = Eigen::MatrixXcd::Identity(u64.rows(), u64.cols());
    EXPECT_LT(max_abs(u64.adjoint() * u64 - I), 1e-12);
  }
}

TEST(FinitePulse, MatchesBruteForceTimeOrdering) {
  const auto spec = spec_jmax(21);
  const auto b = make_block(spec, 0, 1);
  const auto u = finite_pulse(4.0, fwhm130, 64, b, spec);
  const auto coarse = finite_oracle(4.0, fwhm130, b, spec, 2000);
  const auto fine = finite_oracle(4.0, fwhm130, b, spec, 4000);
  // oracle is second order: its own error is ~ |fine - coarse| / 3
  const double oracle_err = max_abs(fine - coarse) / 3.0;
  EXPECT_LT(max_abs(u - fine), 2.0 * oracle_err + 1e-9);
  EXPECT_LT(oracle_err, 1e-4);
}

TEST(FinitePulse, ApproachesDeltaLinearlyInWidth) {
  const auto spec = spec_jmax(31);
  const auto b = make_block(spec, 0, 1);
  const auto d = delta_kick(4.0, b);
  std::vector<double> err;
  for (double f = fwhm130; f > fwhm130 / 40; f /= 2) err.push_back(max_abs(finite_pulse(4.0, f, 64, b, spec) - d));
  for (std::size_t i = 1; i < err.size(); ++i) EXPECT_LT(err[i], err[i - 1]);
  // once the pulse is short against the J = 31 beat period the error halves with the width
  for (std::size_t i = 3; i < err.size(); ++i) EXPECT_NEAR(err[i - 1] / err[i], 2.0, 0.1);
}

TEST(FinitePulse, TwoLevelSuppression) {
  // Weak pulse on {19, 21}: first-order transfer is |int g(t) e^{i w t} dt|^2 times
  // the delta result, i.e. exp(-w^2 sigma^2 / 2) squared for a Gaussian g.
  const auto spec = oxygen16();
  const BasisBlock b{0, {19, 21}};
  const double P = 0.01;
  const double w = M_PI * (462.0 - 380.0);  // rad per T_rev
  const double sigma = fwhm130 / std::sqrt(8.0 * std::log(2.0));
  const double factor = std::exp(-w * w * sigma * sigma);
  const double pd = std::norm(delta_kick(P, b)(1, 0));
  const double pf = std::norm(finite_pulse(P, fwhm130, 64, b, spec)(1, 0));
  EXPECT_LT(pf, pd);
  EXPECT_NEAR(pf / pd, factor, 0.02 * factor);
}

TEST(EvolveTrain, ZeroStrengthKeepsPopulations) {
  const auto spec = spec_jmax(41);
  const auto b = make_block(spec, 1, 1);
  const auto psi = RotState::basis_state(b, 3);
  const auto tr = evolve_train(psi, periodic_train(13, 0.29, 0.0, fwhm130), KickMode::finite(64), spec);
  ASSERT_EQ(tr.populations_after_kick.size(), 14u);
  for (const auto& p : tr.populations_after_kick) EXPECT_NEAR(p[3], 1.0, 1e-14);
}

TEST(EvolveTrain, FullRevivalStacksKicks) {
  // free evolution over T_rev is the identity, so N delta kicks of P are one kick of N P
  const auto spec = spec_jmax(61);
  const auto b = make_block(spec, 0, 1);
  const auto psi = RotState::basis_state(b, 1);
  const auto tr = evolve_train(psi, periodic_train(5, 1.0, 1.5, 0.0), KickMode::delta(), spec);
  const Eigen::VectorXcd expect = delta_kick(7.5, b) * psi.amplitudes;
  EXPECT_LT((tr.states_after_kick.back().amplitudes - expect).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(EvolveTrain, NormAndParityConserved) {
  const auto spec = spec_jmax(61);
  const auto b = make_block(spec, 2, 1);
  const auto psi = RotState::basis_state(b, 5);
  const auto tr = evolve_train(psi, periodic_train(13, 0.318, 8.0, fwhm130), KickMode::finite(64), spec);
  for (std::size_t n = 0; n < tr.states_after_kick.size(); ++n) {
    EXPECT_NEAR(tr.states_after_kick[n].norm_squared(), 1.0, 1e-11);
    const auto& p = tr.populations_after_kick[n];
    for (std::size_t J = 0; J < p.size(); J += 2) EXPECT_EQ(p[J], 0.0);
    for (std::size_t J = 0; J < 2; ++J) EXPECT_EQ(p[J], 0.0);  // |M| = 2 forbids J < 2
  }
}

TEST(EvolveTrain, LeakageGuardReportsKick) {
  const auto spec = spec_jmax(9);
  const auto b = make_block(spec, 0, 1);
  const auto psi = RotState::basis_state(b, 1);
  try {
    evolve_train(psi, periodic_train(13, 0.3, 8.0, 0.0), KickMode::delta(), spec);
    FAIL() << "expected LeakageError";
  } catch (const LeakageError& e) {
    EXPECT_GE(e.kick_index(), 1);
    EXPECT_LE(e.kick_index(), 13);
    EXPECT_GT(e.leaked_population(), 1e-6);
    EXPECT_NE(std::string(e.what()).find("kick " + std::to_string(e.kick_index())), std::string::npos);
  }
  EvolveOptions off;
  off.leakage_threshold = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(evolve_train(psi, periodic_train(13, 0.3, 8.0, 0.0), KickMode::delta(), spec, off));
}

TEST(EvolveTrain, RejectsUnnormalizedState) {
  const auto spec = spec_jmax(21);
  auto psi = RotState::basis_state(make_block(spec, 0, 1), 1);
  psi.amplitudes *= 2.0;
  EXPECT_THROW(evolve_train(psi, periodic_train(3, 0.3, 4.0, 0.0), KickMode::delta(), spec), ConfigError);
}

TEST(PropagatorCache, ReusesOperators) {
  PropagatorCache cache(spec_jmax(31));
  const auto b = make_block(cache.spec(), 0, 1);
  const Pulse p{0.0, 4.0, fwhm130};
  const auto a = cache.kick(b, p, KickMode::finite(64));
  const auto again = cache.kick(b, {0.7, 4.0, fwhm130}, KickMode::finite(64));
  EXPECT_EQ(a.get(), again.get());
  EXPECT_EQ(cache.size(), 1u);
  cache.kick(b, p, KickMode::delta());
  EXPECT_EQ(cache.size(), 2u);
}
