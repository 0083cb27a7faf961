#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "accompanion/basis_mixer.hpp"
#include "support/fixtures.hpp"
#include "support/nn_oracle.hpp"

namespace accompanion {
namespace {

using test::Vec;
using test::affine;
using test::as_vec;
using test::random_basis;
using test::reference_onsetwise;
using test::tanh_all;

AccompanimentScore accomp_of(const std::vector<std::tuple<int, double, double>>& notes) {
  std::vector<ScoreNote> v;
  int id = 0;
  for (auto [pitch, onset, dur] : notes) v.push_back({id++, pitch, onset, dur, Part::accompaniment});
  return group_onsets(v);
}


TEST(OnsetBasisTest, CMajorChord) {
  auto phi = extract_onset_basis(accomp_of({{60, 0, 1}, {64, 0, 1}, {67, 0, 1}}));
  ASSERT_EQ(phi.size(), 1u);
  EXPECT_NEAR(phi[0](0), (191.0 / 3.0) / 127.0, 1e-12);
  EXPECT_NEAR(phi[0](0), 0.5013, 1e-4);
  EXPECT_NEAR(phi[0](1), 0.0551, 1e-4);
  EXPECT_DOUBLE_EQ(phi[0](2), 0.3);
  EXPECT_DOUBLE_EQ(phi[0](3), 0.0);
  EXPECT_DOUBLE_EQ(phi[0](5), 0.0);
  EXPECT_DOUBLE_EQ(phi[0](6), 0.0);
  EXPECT_DOUBLE_EQ(phi[0](7), 0.25);
  EXPECT_DOUBLE_EQ(phi[0](8), 1.0);
  EXPECT_DOUBLE_EQ(phi[0](9), 1.0);
}

TEST(OnsetBasisTest, MetricalPhase) {
  auto phi = extract_onset_basis(accomp_of({{60, 2.5, 1}}));
  ASSERT_EQ(phi.size(), 1u);
  EXPECT_DOUBLE_EQ(phi[0](3), 0.5);
  EXPECT_DOUBLE_EQ(phi[0](4), 0.625);
}

TEST(OnsetBasisTest, EmptyAndBounds) {
  EXPECT_TRUE(extract_onset_basis(AccompanimentScore{}).empty());
  auto accomp = test::chord_accompaniment(40);
  accomp.notes.push_back({9999, 20, 70.0, 9.0, Part::accompaniment});
  accomp = group_onsets(accomp.notes);
  auto phi = extract_onset_basis(accomp);
  ASSERT_EQ(phi.size(), accomp.onsets.size());
  EXPECT_DOUBLE_EQ(phi.front()(8), 1.0);
  EXPECT_DOUBLE_EQ(phi.back()(9), 1.0);
  EXPECT_DOUBLE_EQ(phi.back()(6), 0.0);
  for (const auto& v : phi)
    for (int k = 0; k < kOnsetBasisSize; ++k) {
      EXPECT_GE(v(k), 0.0);
      EXPECT_LE(v(k), 1.0);
    }
  for (const auto& v : extract_note_basis(accomp))
    for (int k = 0; k < kNoteBasisSize; ++k) {
      EXPECT_GE(v(k), 0.0);
      EXPECT_LE(v(k), 1.0);
    }
}

TEST(NoteBasisTest, PositionInChord) {
  auto accomp = accomp_of({{60, 0, 1}, {64, 0, 1}, {67, 0, 1}, {72, 1.25, 2}});
  auto phi = extract_note_basis(accomp);
  ASSERT_EQ(phi.size(), 4u);
  EXPECT_DOUBLE_EQ(phi[0](2), 0.0);
  EXPECT_DOUBLE_EQ(phi[1](2), 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(phi[2](2), 1.0);
  EXPECT_DOUBLE_EQ(phi[3](2), 0.0);  // single note: span clamps to 1
  EXPECT_DOUBLE_EQ(phi[3](1), 0.5);
  EXPECT_DOUBLE_EQ(phi[3](3), 0.1);
  EXPECT_DOUBLE_EQ(phi[3](4), 0.25);
}

TEST(Onsetwise, ZeroWeightsAreNeutral) {
  std::mt19937_64 rng(1);
  auto out = predict_onsetwise(ModelWeights::zeros(), random_basis(rng, 7));
  ASSERT_EQ(out.size(), 7u);
  for (const auto& t : out) {
    EXPECT_EQ(t.loudnessTrend, 1.0);
    EXPECT_EQ(t.bpRatio, 1.0);
  }
}

TEST(Onsetwise, LengthOneHasNoRecurrence) {
  std::mt19937_64 rng(2);
  auto w = random_init(3);
  auto phi = random_basis(rng, 1);
  auto trace = onsetwise_forward(w.onsetwise, phi);
  Eigen::VectorXd fw = (w.onsetwise.fwIn * phi[0] + w.onsetwise.fwBias).array().tanh().matrix();
  Eigen::VectorXd bw = (w.onsetwise.bwIn * phi[0] + w.onsetwise.bwBias).array().tanh().matrix();
  Eigen::VectorXd cat(fw.size() + bw.size());
  cat << fw, bw;
  Eigen::Vector2d y = w.onsetwise.out * cat + w.onsetwise.outBias;
  EXPECT_LT((trace.output[0] - y).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Onsetwise, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(8);
  for (int instance = 0; instance < 100; ++instance) {
    auto w = random_init(rng(), 2 + static_cast<int>(rng() % 20));
    // larger recurrent weights exercise saturation
    w.onsetwise.fwRec *= 3.0;
    w.onsetwise.bwRec *= 3.0;
    auto phi = random_basis(rng, 1 + rng() % 12);
    auto trace = onsetwise_forward(w.onsetwise, phi);
    auto ref = reference_onsetwise(w.onsetwise, phi);
    auto targets = predict_onsetwise(w, phi);
    for (std::size_t t = 0; t < phi.size(); ++t) {
      ASSERT_NEAR(trace.output[t](0), ref[t][0], 1e-6);
      ASSERT_NEAR(trace.output[t](1), ref[t][1], 1e-6);
      ASSERT_NEAR(targets[t].loudnessTrend, std::clamp(std::exp(ref[t][0]), 0.25, 4.0), 1e-6);
      ASSERT_NEAR(targets[t].bpRatio, std::clamp(std::exp(ref[t][1]), 0.25, 4.0), 1e-6);
    }
  }
}

TEST(Onsetwise, TargetsStayInRange) {
  std::mt19937_64 rng(12);
  for (int instance = 0; instance < 50; ++instance) {
    auto w = random_init(rng());
    w.onsetwise.out *= 20.0;
    for (const auto& t : predict_onsetwise(w, random_basis(rng, 9))) {
      EXPECT_GE(t.loudnessTrend, 0.25);
      EXPECT_LE(t.loudnessTrend, 4.0);
      EXPECT_GE(t.bpRatio, 0.25);
      EXPECT_LE(t.bpRatio, 4.0);
    }
  }
}

TEST(Onsetwise, ReversalSymmetry) {
  std::mt19937_64 rng(21);
  for (int instance = 0; instance < 50; ++instance) {
    auto w = random_init(rng(), 8);
    auto phi = random_basis(rng, 2 + rng() % 10);
    auto swapped = w.onsetwise;
    std::swap(swapped.fwIn, swapped.bwIn);
    std::swap(swapped.fwRec, swapped.bwRec);
    std::swap(swapped.fwBias, swapped.bwBias);
    const auto h = w.onsetwise.hidden();
    swapped.out.leftCols(h) = w.onsetwise.out.rightCols(h);
    swapped.out.rightCols(h) = w.onsetwise.out.leftCols(h);
    auto reversed = phi;
    std::reverse(reversed.begin(), reversed.end());

    auto a = onsetwise_forward(w.onsetwise, phi);
    auto b = onsetwise_forward(swapped, reversed);
    const std::size_t t = phi.size();
    for (std::size_t i = 0; i < t; ++i) {
      ASSERT_LT((a.forward[i] - b.backward[t - 1 - i]).cwiseAbs().maxCoeff(), 1e-12);
      ASSERT_LT((a.backward[i] - b.forward[t - 1 - i]).cwiseAbs().maxCoeff(), 1e-12);
      ASSERT_LT((a.output[i] - b.output[t - 1 - i]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Notewise, ZeroWeightsAreNeutral) {
  NoteBasis phi;
  phi << 0.5, 0.25, 0.0, 0.3, 0.5;
  auto t = predict_notewise(ModelWeights::zeros(), phi);
  EXPECT_EQ(t.loudnessDev, 0.0);
  EXPECT_EQ(t.timing, 0.0);
  EXPECT_EQ(t.articulation, 1.0);
}

TEST(Notewise, MatchesHandComputation) {
  std::mt19937_64 rng(31);
  for (int instance = 0; instance < 100; ++instance) {
    auto w = random_init(rng(), 16, 1 + static_cast<int>(rng() % 24), 1 + static_cast<int>(rng() % 24));
    NoteBasis phi;
    for (int k = 0; k < kNoteBasisSize; ++k) phi(k) = static_cast<double>(rng() % 1000) / 999.0;
    const auto& n = w.notewise;
    Vec h1 = tanh_all(affine(n.w1, as_vec(phi), n.b1));
    Vec h2 = tanh_all(affine(n.w2, h1, n.b2));
    Vec y = affine(n.out, h2, n.outBias);
    auto t = predict_notewise(w, phi);
    ASSERT_NEAR(t.loudnessDev, 32.0 * std::tanh(y[0]), 1e-9);
    ASSERT_NEAR(t.timing, 0.2 * std::tanh(y[1]), 1e-9);
    ASSERT_NEAR(t.articulation, std::clamp(std::exp(y[2]), 0.1, 2.0), 1e-9);
  }
}

TEST(Notewise, TargetsStayInRange) {
  std::mt19937_64 rng(32);
  for (int instance = 0; instance < 200; ++instance) {
    auto w = random_init(rng());
    w.notewise.out *= 50.0;
    NoteBasis phi;
    for (int k = 0; k < kNoteBasisSize; ++k) phi(k) = static_cast<double>(rng() % 1000) / 999.0;
    auto t = predict_notewise(w, phi);
    EXPECT_LE(std::abs(t.loudnessDev), 32.0);
    EXPECT_LE(std::abs(t.timing), 0.2);
    EXPECT_GE(t.articulation, 0.1);
    EXPECT_LE(t.articulation, 2.0);
  }
}

TEST(Notewise, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  const double eps = 1e-5;
  for (int instance = 0; instance < 100; ++instance) {
    auto w = random_init(rng());
    NoteBasis phi;
    for (int k = 0; k < kNoteBasisSize; ++k) phi(k) = static_cast<double>(rng() % 1000) / 999.0;
    auto jac = notewise_jacobian(w.notewise, phi);
    for (int k = 0; k < kNoteBasisSize; ++k) {
      NoteBasis up = phi, down = phi;
      up(k) += eps;
      down(k) -= eps;
      Eigen::Vector3d fd = (notewise_output(w.notewise, up) - notewise_output(w.notewise, down)) / (2 * eps);
      for (int r = 0; r < 3; ++r) {
        const double scale = std::max(1e-3, std::abs(fd(r)));
        ASSERT_LT(std::abs(jac(r, k) - fd(r)) / scale, 1e-4) << "row " << r << " col " << k;
      }
    }
  }
}

TEST(PieceTargetsTest, ShapesFollowScore) {
  auto accomp = test::chord_accompaniment(12);
  auto targets = predict_piece(random_init(5), accomp);
  EXPECT_EQ(targets.onsets.size(), accomp.onsets.size());
  EXPECT_EQ(targets.notes.size(), accomp.notes.size());
}

TEST(Weights, SaveLoadIsExact) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    auto w = random_init(seed, 7, 5, 9);
    auto back = load_weights(save_weights(w));
    EXPECT_EQ(back.onsetwise.fwIn, w.onsetwise.fwIn);
    EXPECT_EQ(back.onsetwise.fwRec, w.onsetwise.fwRec);
    EXPECT_EQ(back.onsetwise.fwBias, w.onsetwise.fwBias);
    EXPECT_EQ(back.onsetwise.bwIn, w.onsetwise.bwIn);
    EXPECT_EQ(back.onsetwise.bwRec, w.onsetwise.bwRec);
    EXPECT_EQ(back.onsetwise.bwBias, w.onsetwise.bwBias);
    EXPECT_EQ(back.onsetwise.out, w.onsetwise.out);
    EXPECT_EQ(back.onsetwise.outBias, w.onsetwise.outBias);
    EXPECT_EQ(back.notewise.w1, w.notewise.w1);
    EXPECT_EQ(back.notewise.b1, w.notewise.b1);
    EXPECT_EQ(back.notewise.w2, w.notewise.w2);
    EXPECT_EQ(back.notewise.b2, w.notewise.b2);
    EXPECT_EQ(back.notewise.out, w.notewise.out);
    EXPECT_EQ(back.notewise.outBias, w.notewise.outBias);
    EXPECT_EQ(save_weights(back), save_weights(w));
  }
}

TEST(Weights, ShapeMismatchNamesArray) {
  auto j = nlohmann::json::parse(save_weights(random_init(1, 16)));
  auto& wout = j["onsetwise"]["Wout"];
  wout["shape"] = {2, 33};
  for (int i = 0; i < 2; ++i) wout["data"].push_back(0.0);
  try {
    load_weights(j.dump());
    FAIL() << "expected WeightsError";
  } catch (const WeightsError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("onsetwise.Wout"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 32]"), std::string::npos) << msg;
  }
}

TEST(Weights, MalformedInputsRejected) {
  EXPECT_THROW(load_weights("not json"), WeightsError);
  EXPECT_THROW(load_weights("{}"), WeightsError);
  auto j = nlohmann::json::parse(save_weights(random_init(1)));
  auto missing = j;
  missing["notewise"].erase("b2");
  EXPECT_THROW(load_weights(missing.dump()), WeightsError);
  auto shortData = j;
  shortData["notewise"]["b1"]["data"].erase(0);
  EXPECT_THROW(load_weights(shortData.dump()), WeightsError);
  auto nonNumber = j;
  nonNumber["notewise"]["W1"]["data"][0] = "x";
  EXPECT_THROW(load_weights(nonNumber.dump()), WeightsError);
}

TEST(Weights, RandomInitIsDeterministic) {
  EXPECT_EQ(save_weights(random_init(42)), save_weights(random_init(42)));
  EXPECT_NE(save_weights(random_init(42)), save_weights(random_init(43)));
  auto w = random_init(7);
  EXPECT_LE(w.onsetwise.fwIn.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(10.0));
  EXPECT_LE(w.notewise.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(16.0));
}

}  // namespace
}  // namespace accompanion
