#include <gtest/gtest.h>

#include <random>

#include "accompanion/tempo_tracker.hpp"

namespace accompanion {
namespace {

TempoState state_with(double period, double drift, double v0, double v1) {
  TempoState s;
  s.mean << period, drift;
  s.cov = Eigen::Vector2d(v0, v1).asDiagonal();
  return s;
}

TEST(Predict, ZeroDriftIsFixedPoint) {
  TempoParams p;
  for (auto regime : {AlignmentLabel::match, AlignmentLabel::insertion, AlignmentLabel::wrongNote}) {
    auto s = state_with(0.5, 0.0, 0.01, 1e-3);
    s.regime = regime;
    auto out = predict(s, p);
    EXPECT_DOUBLE_EQ(out.mean(0), 0.5);
    EXPECT_DOUBLE_EQ(out.mean(1), 0.0);
  }
}

TEST(Predict, DriftAdvancesPeriod) {
  auto out = predict(state_with(0.5, 0.01, 0.01, 1e-3), {});
  EXPECT_DOUBLE_EQ(out.mean(0), 0.51);
  EXPECT_DOUBLE_EQ(out.mean(1), 0.01);
}

TEST(Predict, CovarianceByHand) {
  // A P A^T with A = [[1,1],[0,1]], P = diag(a, b): [[a+b, b], [b, b]]
  auto out = predict(state_with(0.5, 0.0, 0.01, 0.001), {});
  EXPECT_NEAR(out.cov(0, 0), 0.01 + 0.001 + 1e-4, 1e-15);
  EXPECT_NEAR(out.cov(0, 1), 0.001, 1e-15);
  EXPECT_NEAR(out.cov(1, 0), 0.001, 1e-15);
  EXPECT_NEAR(out.cov(1, 1), 0.001 + 1e-5, 1e-15);
}

TEST(Update, ZeroInnovationKeepsMean) {
  auto out = update(state_with(0.5, 0.0, 0.01, 1e-4), {}, 0.5, 1.0, AlignmentLabel::match);
  EXPECT_DOUBLE_EQ(out.mean(0), 0.5);
  EXPECT_DOUBLE_EQ(out.mean(1), 0.0);
  EXPECT_LT(out.cov(0, 0), 0.01);
}

TEST(Update, ScalarGain) {
  auto out = update(state_with(0.5, 0.0, 0.01, 1e-4), {}, 0.6, 1.0, AlignmentLabel::match);
  EXPECT_NEAR(out.mean(0), 0.5 + (0.01 / 0.011) * 0.1, 1e-15);
  EXPECT_NEAR(out.mean(0), 0.59091, 1e-5);
  EXPECT_DOUBLE_EQ(out.mean(1), 0.0);
}

TEST(Update, InsertionConsumesNothing) {
  auto in = state_with(0.7, 0.002, 0.02, 2e-4);
  auto out = update(in, {}, 3.0, 1.0, AlignmentLabel::insertion);
  EXPECT_EQ(out.mean, in.mean);
  EXPECT_EQ(out.cov, in.cov);
  EXPECT_EQ(out.regime, in.regime);
  auto stepped = track_event(in, {}, 3.0, 1.0, AlignmentLabel::insertion);
  EXPECT_EQ(stepped.mean, in.mean);
}

TEST(Update, RejectsNonPositiveScoreIoi) {
  EXPECT_THROW(update(TempoState{}, {}, 0.5, 0.0, AlignmentLabel::match), std::invalid_argument);
}

TEST(BeatPeriod, Clamped) {
  EXPECT_DOUBLE_EQ(current_beat_period(state_with(0.5, 0, 1, 1)), 0.5);
  EXPECT_DOUBLE_EQ(current_beat_period(state_with(5.0, 0, 1, 1)), 4.0);
  EXPECT_DOUBLE_EQ(current_beat_period(state_with(0.05, 0, 1, 1)), 0.1);
  // the update clamps the stored mean too
  auto out = update(state_with(3.9, 0.0, 1.0, 1e-4), {}, 40.0, 1.0, AlignmentLabel::match);
  EXPECT_DOUBLE_EQ(out.mean(0), kMaxBeatPeriod);
}

// With drift pinned (zero variance, zero mean) the filter is a scalar random
// walk observed through z = h x + noise; compare against the textbook
// conjugate-Gaussian posterior.
TEST(Conjugacy, ScalarSubcase) {
  std::mt19937_64 rng(5);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (rng() >> 11) * 0x1.0p-53; };
  for (int i = 0; i < 1000; ++i) {
    const double m = uni(0.3, 1.5), v = uni(1e-4, 5e-2), q = uni(1e-6, 1e-3), r = uni(1e-4, 1e-1);
    const double h = uni(0.25, 3.0), z = h * m * uni(0.7, 1.3);
    TempoParams p;
    p.processMatch = Eigen::Vector2d(q, 0.0).asDiagonal();
    p.obsMatch = r;
    auto s = state_with(m, 0.0, v, 0.0);
    s = update(predict(s, p), p, z, h, AlignmentLabel::match);

    const double priorVar = v + q;
    const double postVar = 1.0 / (1.0 / priorVar + h * h / r);
    const double postMean = postVar * (m / priorVar + h * z / r);
    ASSERT_NEAR(s.mean(0), postMean, 1e-12);
    ASSERT_NEAR(s.cov(0, 0), postVar, 1e-12);
    ASSERT_EQ(s.mean(1), 0.0);
  }
}

TEST(Covariance, StaysPositiveDefinite) {
  std::mt19937_64 rng(9);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (rng() >> 11) * 0x1.0p-53; };
  TempoParams p;
  auto s = init_tempo(p);
  const AlignmentLabel regimes[] = {AlignmentLabel::match, AlignmentLabel::insertion,
                                    AlignmentLabel::wrongNote};
  for (int i = 0; i < 10000; ++i) {
    s.regime = regimes[rng() % 3];
    s = predict(s, p);
    ASSERT_TRUE(s.positive_definite()) << "after predict " << i;
    const double beats = uni(0.25, 4.0);
    s = update(s, p, beats * uni(0.2, 1.5), beats, regimes[rng() % 3]);
    ASSERT_TRUE(s.positive_definite()) << "after update " << i;
  }
}

// Exact IOIs and a zero observation variance in both regimes that update.
TEST(Convergence, NoiselessObservations) {
  for (double start = 0.25; start <= 1.0001; start += 0.05) {
    for (double truth : {0.3, 0.5, 0.75, 1.0, 1.5}) {
      TempoParams p;
      p.obsMatch = 0.0;
      p.obsWrongNote = 0.0;
      p.initialMean << start, 0.0;
      auto s = init_tempo(p);
      for (int k = 0; k < 10; ++k) {
        const double beats = (k % 3 == 0) ? 0.5 : 1.0;
        s = track_event(s, p, beats * truth, beats, AlignmentLabel::match);
      }
      EXPECT_LT(std::abs(s.mean(0) - truth), 0.01 * truth) << "start " << start << " truth " << truth;
    }
  }
}

// Same with the default observation variance, for tempi within a factor of
// two of the initial guess.
TEST(Convergence, DefaultNoiseExactIois) {
  for (double start = 0.25; start <= 1.0001; start += 0.05) {
    for (double ratio : {0.5, 0.8, 1.0, 1.25, 2.0}) {
      const double truth = start * ratio;
      TempoParams p;
      p.initialMean << start, 0.0;
      auto s = init_tempo(p);
      for (int k = 0; k < 10; ++k) s = track_event(s, p, truth, 1.0, AlignmentLabel::match);
      EXPECT_LT(std::abs(s.mean(0) - truth), 0.01 * truth) << "start " << start << " truth " << truth;
    }
  }
}

TEST(Regimes, WrongNoteMovesLess) {
  std::mt19937_64 rng(4);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (rng() >> 11) * 0x1.0p-53; };
  for (int i = 0; i < 500; ++i) {
    auto s = state_with(uni(0.3, 1.0), uni(-0.01, 0.01), uni(1e-4, 1e-2), uni(1e-6, 1e-4));
    const double beats = uni(0.5, 2.0);
    const double z = beats * s.mean(0) * uni(0.8, 1.2);
    if (std::abs(z - beats * s.mean(0)) < 1e-9) continue;
    auto m = update(s, {}, z, beats, AlignmentLabel::match);
    auto w = update(s, {}, z, beats, AlignmentLabel::wrongNote);
    EXPECT_LT(std::abs(w.mean(0) - s.mean(0)), std::abs(m.mean(0) - s.mean(0)));
  }
}

}  // namespace
}  // namespace accompanion
