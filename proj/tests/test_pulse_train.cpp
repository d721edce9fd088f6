#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "qkrot/pulse_train.hpp"

using namespace qkrot;

namespace {
constexpr double trev_ps = 11.67;
constexpr double fwhm = 130.0 / 11670.0;

ResonanceAvoidance low_j_avoidance() { return {{1, 3, 5}, 0.150 / trev_ps}; }
}  // namespace

TEST(Rng, DeterministicAndStreamsDiffer) {
  Rng a(42), b(42), c(42, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.bits();
    EXPECT_EQ(x, b.bits());
    differs |= x != c.bits();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, NormalMoments) {
  Rng r(7);
  const int n = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(ss / n - mean * mean, 1.0, 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(PeriodicTrain, Layout) {
  const auto one = periodic_train(1, 0.3, 4.0, fwhm);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.pulses[0].time, 0.0);
  EXPECT_EQ(one.window(), 0.0);

  const auto t = periodic_train(13, 0.275, 4.0, fwhm);
  ASSERT_EQ(t.size(), 13u);
  EXPECT_NEAR(t.pulses.back().time, 3.30, 1e-12);
  for (const auto& p : t.pulses) {
    EXPECT_EQ(p.strength, 4.0);
    EXPECT_EQ(p.fwhm, fwhm);
  }
  for (double d : t.intervals()) EXPECT_NEAR(d, 0.275, 1e-12);

  // twelve intervals of 0.32 T_rev: about 44.8 ps
  EXPECT_NEAR(periodic_train(13, 0.32, 4.0, fwhm).window() * trev_ps, 44.8, 0.05);

  EXPECT_THROW(periodic_train(0, 0.3, 4.0, fwhm), ConfigError);
  EXPECT_THROW(periodic_train(3, 0.0, 4.0, fwhm), ConfigError);
  EXPECT_THROW(periodic_train(3, 0.3, -1.0, fwhm), ConfigError);
  // pulses closer than three FWHM
  EXPECT_THROW(periodic_train(3, 0.02, 4.0, fwhm), ConfigError);
}

TEST(PeriodicSet, EvenlySpacedPeriods) {
  const auto s = periodic_set(13, 0.26, 0.29, 10, 4.0, fwhm);
  ASSERT_EQ(s.trains.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(s.trains[i].intervals().front(), 0.26 + 0.03 * i / 9.0, 1e-14);
  EXPECT_NO_THROW(s.validate());
  const auto two = periodic_set(5, 0.3, 0.4, 2, 4.0, fwhm);
  EXPECT_EQ(two.trains[0].intervals().front(), 0.3);
  EXPECT_NEAR(two.trains[1].intervals().front(), 0.4, 1e-15);
  EXPECT_THROW(periodic_set(5, 0.3, 0.4, 1, 4.0, fwhm), ConfigError);
  EXPECT_THROW(periodic_set(5, 0.4, 0.3, 3, 4.0, fwhm), ConfigError);
}

TEST(JitteredTrain, ZeroSigmaIsPeriodic) {
  const auto j = jittered_train(13, 0.32, 0.0, 5, std::nullopt, 4.0, fwhm, trev_ps);
  const auto p = periodic_train(13, 0.32, 4.0, fwhm);
  EXPECT_EQ(j.pulses, p.pulses);
  EXPECT_THROW(jittered_train(13, 1.0 / 3.0, 0.0, 5, low_j_avoidance(), 4.0, fwhm, trev_ps), GenerationError);
}

TEST(JitteredTrain, AvoidanceHoldsForEveryInterval) {
  const auto avoid = low_j_avoidance();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = jittered_train(13, 0.34, 0.35, seed, avoid, 4.0, fwhm, trev_ps);
    ASSERT_EQ(t.size(), 13u);
    for (double d : t.intervals()) {
      EXPECT_GT(d, 3.0 * fwhm);
      // brute-force distance to every m/(2J+3) for J in {1, 3, 5}
      double best = 1e9;
      for (int J : avoid.J_set)
        for (int m = 0; m <= 4 * (2 * J + 3); ++m) best = std::min(best, std::abs(d - m / (2.0 * J + 3.0)));
      EXPECT_GE(best * trev_ps * 1000.0, 150.0 - 1e-9);
    }
  }
}

TEST(JitteredTrain, SeedDeterminism) {
  const auto a = jittered_train(13, 0.32, 0.43, 11, std::nullopt, 4.0, fwhm, trev_ps);
  const auto b = jittered_train(13, 0.32, 0.43, 11, std::nullopt, 4.0, fwhm, trev_ps);
  const auto c = jittered_train(13, 0.32, 0.43, 12, std::nullopt, 4.0, fwhm, trev_ps);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.pulses, c.pulses);
  EXPECT_EQ(a.seed, std::optional<std::uint64_t>(11));
}

TEST(JitteredTrain, ImpossibleAvoidanceFailsLoudly) {
  // every interval lies within 1 T_rev of a resonance
  const ResonanceAvoidance all{{1}, 1.0};
  EXPECT_THROW(jittered_train(3, 0.3, 0.1, 1, all, 4.0, fwhm, trev_ps), GenerationError);
}

TEST(JitteredSet, SizesAndZeroSigma) {
  const auto s = jittered_set(10, 13, 0.32, 0.43, 1, std::nullopt, 4.0, fwhm, trev_ps);
  ASSERT_EQ(s.trains.size(), 10u);
  EXPECT_EQ(interval_stats(s).count, 120u);
  EXPECT_EQ(s.design, TrainDesign::Jitter);
  const auto z = jittered_set(4, 13, 0.32, 0.0, 1, std::nullopt, 4.0, fwhm, trev_ps);
  for (const auto& t : z.trains) EXPECT_EQ(t.pulses, periodic_train(13, 0.32, 4.0, fwhm).pulses);
  EXPECT_EQ(jittered_set(2, 13, 0.34, 0.35, 1, low_j_avoidance(), 4.0, fwhm, trev_ps).design,
            TrainDesign::JitterAvoiding);
}

TEST(JitteredSet, PooledStatisticsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = jittered_set(10, 13, 0.32, 0.43, seed, std::nullopt, 4.0, fwhm, trev_ps);
    const auto st = interval_stats(s);
    EXPECT_NEAR(st.mean, 0.32, 0.05 * 0.32) << seed;
    EXPECT_GE(st.sd, 0.366 * 0.32) << seed;
    EXPECT_LE(st.sd, 0.494 * 0.32) << seed;
  }
}

TEST(JitteredSet, Reproducible) {
  const auto a = jittered_set(10, 13, 0.34, 0.35, 9, low_j_avoidance(), 6.0, fwhm, trev_ps);
  const auto b = jittered_set(10, 13, 0.34, 0.35, 9, low_j_avoidance(), 6.0, fwhm, trev_ps);
  ASSERT_EQ(a.trains.size(), b.trains.size());
  for (std::size_t i = 0; i < a.trains.size(); ++i) EXPECT_EQ(a.trains[i], b.trains[i]);
  EXPECT_EQ(a.parameters, b.parameters);
}

TEST(AmplitudeNoise, ZeroReproducibleAndUnbiased) {
  const auto base = periodic_train(13, 0.3, 4.0, fwhm);
  EXPECT_EQ(amplitude_noise(base, 0.0, 3), base);
  EXPECT_EQ(amplitude_noise(base, 0.05, 3), amplitude_noise(base, 0.05, 3));
  EXPECT_NE(amplitude_noise(base, 0.05, 3).pulses, amplitude_noise(base, 0.05, 4).pulses);
  EXPECT_THROW(amplitude_noise(base, -0.1, 3), ConfigError);

  double sum = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 800; ++seed)
    for (const auto& p : amplitude_noise(base, 0.05, seed).pulses) {
      sum += p.strength / 4.0;
      ++n;
    }
  ASSERT_GE(n, 10000);
  EXPECT_NEAR(sum / n, 1.0, 0.01);
}

TEST(TrainJson, RoundTrip) {
  const auto t = jittered_train(13, 0.34, 0.35, 2, low_j_avoidance(), 6.0, fwhm, trev_ps);
  const auto j = train_to_json(t, trev_ps);
  EXPECT_NEAR(j["pulses"][1]["t_ps"].get<double>(), t.pulses[1].time * trev_ps, 1e-12);
  const auto back = train_from_json(nlohmann::json::parse(j.dump()), trev_ps);
  EXPECT_EQ(back, t);
  // picosecond-only input
  nlohmann::json ps = {{"pulses", {{{"t_ps", 0.0}, {"P", 4.0}}, {{"t_ps", 3.5}, {"P", 4.0}, {"fwhm_ps", 0.13}}}}};
  const auto q = train_from_json(ps, trev_ps);
  EXPECT_NEAR(q.pulses[1].time, 3.5 / trev_ps, 1e-15);
  EXPECT_EQ(q.pulses[0].fwhm, 0.0);
  EXPECT_FALSE(q.seed);
}

TEST(TrainSet, RejectsMixedTrains) {
  TrainSet s;
  s.trains = {periodic_train(13, 0.3, 4.0, fwhm), periodic_train(12, 0.3, 4.0, fwhm)};
  EXPECT_THROW(s.validate(), ConfigError);
  s.trains = {periodic_train(13, 0.3, 4.0, fwhm), periodic_train(13, 0.3, 6.0, fwhm)};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ShaperWindow, Warning) {
  const double limit = 50.0 / trev_ps;
  EXPECT_FALSE(shaper_window_warning(periodic_train(13, 0.32, 4.0, fwhm), limit));
  const auto w = shaper_window_warning(periodic_train(13, 0.4, 4.0, fwhm), limit);
  ASSERT_TRUE(w);
  EXPECT_NE(w->find("shaper window"), std::string::npos);
}
