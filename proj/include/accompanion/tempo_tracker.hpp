#pragma once

// Switching Kalman filter over (beat period, drift). The regime is the
// follower's alignment label and selects the process and observation noise.

#include <algorithm>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "accompanion/score_follower.hpp"

namespace accompanion {

inline constexpr double kMinBeatPeriod = 0.1;
inline constexpr double kMaxBeatPeriod = 4.0;

struct TempoState {
  Eigen::Vector2d mean{0.5, 0.0};  // [seconds per beat, drift per event]
  Eigen::Matrix2d cov = Eigen::Vector2d(0.04, 1e-4).asDiagonal();
  AlignmentLabel regime = AlignmentLabel::match;

  bool positive_definite() const {
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    return llt.info() == Eigen::Success && cov.isApprox(cov.transpose(), 1e-12);
  }
};

struct TempoParams {
  Eigen::Matrix2d processMatch = Eigen::Vector2d(1e-4, 1e-5).asDiagonal();
  Eigen::Matrix2d processInsertion = Eigen::Vector2d(1e-6, 1e-7).asDiagonal();
  Eigen::Matrix2d processWrongNote = Eigen::Vector2d(4e-4, 4e-5).asDiagonal();
  double obsMatch = 1e-3;
  double obsWrongNote = 1e-2;
  Eigen::Vector2d initialMean{0.5, 0.0};
  Eigen::Matrix2d initialCov = Eigen::Vector2d(0.04, 1e-4).asDiagonal();

  const Eigen::Matrix2d& process(AlignmentLabel regime) const {
    switch (regime) {
      case AlignmentLabel::match: return processMatch;
      case AlignmentLabel::insertion: return processInsertion;
      case AlignmentLabel::wrongNote: return processWrongNote;
    }
    return processMatch;
  }
  double observation(AlignmentLabel regime) const {
    return regime == AlignmentLabel::wrongNote ? obsWrongNote : obsMatch;
  }
};

inline const Eigen::Matrix2d& transition_matrix() {
  static const Eigen::Matrix2d a = (Eigen::Matrix2d() << 1.0, 1.0, 0.0, 1.0).finished();
  return a;
}

inline void clamp_beat_period(TempoState& s) {
  s.mean(0) = std::clamp(s.mean(0), kMinBeatPeriod, kMaxBeatPeriod);
}

inline TempoState init_tempo(const TempoParams& params) {
  TempoState s;
  s.mean = params.initialMean;
  s.cov = params.initialCov;
  clamp_beat_period(s);
  return s;
}

inline TempoState predict(TempoState state, const TempoParams& params) {
  const auto& a = transition_matrix();
  state.mean = a * state.mean;
  state.cov = a * state.cov * a.transpose() + params.process(state.regime);
  clamp_beat_period(state);
  return state;
}

/// Measurement update with z = ioiSeconds = scoreIOIBeats * beatPeriod + noise.
/// Insertions carry no observation and return the state untouched.
inline TempoState update(TempoState state, const TempoParams& params, double ioiSeconds,
                         double scoreIOIBeats, AlignmentLabel regime) {
  if (regime == AlignmentLabel::insertion) return state;
  if (!(scoreIOIBeats > 0.0)) throw std::invalid_argument("score IOI must be positive");
  const Eigen::RowVector2d h(scoreIOIBeats, 0.0);
  const double innovationVar = (h * state.cov * h.transpose())(0, 0) + params.observation(regime);
  if (!(innovationVar > 0.0)) throw std::runtime_error("non-positive innovation variance");
  const Eigen::Vector2d gain = state.cov * h.transpose() / innovationVar;
  state.mean += gain * (ioiSeconds - (h * state.mean)(0, 0));
  Eigen::Matrix2d cov = (Eigen::Matrix2d::Identity() - gain * h) * state.cov;
  state.cov = 0.5 * (cov + cov.transpose());
  state.regime = regime;
  clamp_beat_period(state);
  return state;
}

/// Predict under `regime`, then update. Insertions leave the state alone.
inline TempoState track_event(TempoState state, const TempoParams& params, double ioiSeconds,
                              double scoreIOIBeats, AlignmentLabel regime) {
  if (regime == AlignmentLabel::insertion) return state;
  state.regime = regime;
  return update(predict(std::move(state), params), params, ioiSeconds, scoreIOIBeats, regime);
}

inline double current_beat_period(const TempoState& state) {
  return std::clamp(state.mean(0), kMinBeatPeriod, kMaxBeatPeriod);
}

}  // namespace accompanion
