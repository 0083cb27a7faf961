#pragma once

// Online HMM over solo score positions. Observations are the performed pitch
// and the inter-onset interval normalized by the current beat period.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "accompanion/score.hpp"

namespace accompanion {

struct FollowerParams {
  double pCorrectPitch = 0.95;
  double pitchMismatchDecay = 0.5;
  double selfLoopProb = 0.05;
  int maxSkip = 4;
  double skipDecay = 0.5;
  double ioiStdBeats = 0.1;
  bool uniformStart = false;

  void validate() const {
    auto open01 = [](double p) { return p > 0.0 && p < 1.0; };
    if (!open01(pCorrectPitch) || !open01(pitchMismatchDecay) || !open01(selfLoopProb) ||
        !open01(skipDecay))
      throw std::invalid_argument("follower probabilities must lie in (0, 1)");
    if (maxSkip < 1) throw std::invalid_argument("maxSkip must be at least 1");
    if (!(ioiStdBeats > 0.0)) throw std::invalid_argument("ioiStdBeats must be positive");
  }
};

enum class AlignmentLabel { match, insertion, wrongNote };

inline const char* to_string(AlignmentLabel l) {
  switch (l) {
    case AlignmentLabel::match: return "match";
    case AlignmentLabel::insertion: return "insertion";
    case AlignmentLabel::wrongNote: return "wrongNote";
  }
  return "?";
}

struct AlignmentEvent {
  PerformedNote performedNote;
  AlignmentLabel label = AlignmentLabel::match;
  std::size_t scoreIndex = 0;  // position the label refers to (MAP after the step)
  double confidence = 0.0;
};

struct FollowerState {
  std::vector<double> logPosterior;
  std::vector<double> posterior;
  std::size_t mapIndex = 0;
  std::size_t lastMapIndex = 0;
  double lastEventTime = 0.0;
  bool started = false;  // false until the first observation
};

namespace follower_detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline void normalize_log(FollowerState& s) {
  double z = -std::numeric_limits<double>::infinity();
  for (double v : s.logPosterior) z = log_sum_exp(z, v);
  if (!std::isfinite(z)) throw std::runtime_error("follower posterior vanished");
  s.posterior.resize(s.logPosterior.size());
  for (std::size_t i = 0; i < s.logPosterior.size(); ++i) {
    s.logPosterior[i] -= z;
    s.posterior[i] = std::exp(s.logPosterior[i]);
  }
  s.mapIndex = static_cast<std::size_t>(
      std::max_element(s.posterior.begin(), s.posterior.end()) - s.posterior.begin());
}

}  // namespace follower_detail

/// log P(performed | expected). Exact match gets pCorrectPitch; the rest is
/// spread geometrically in semitone distance over the other 127 pitches.
inline double log_pitch_likelihood(const FollowerParams& p, int performed, int expected) {
  if (performed == expected) return std::log(p.pCorrectPitch);
  // sum of d^|q - expected| over q != expected, both sides geometric
  const double d = p.pitchMismatchDecay;
  const double z = d * (1.0 - std::pow(d, expected)) / (1.0 - d) +
                   d * (1.0 - std::pow(d, 127 - expected)) / (1.0 - d);
  return std::log(1.0 - p.pCorrectPitch) +
         std::abs(performed - expected) * std::log(p.pitchMismatchDecay) - std::log(z);
}

inline double log_ioi_likelihood(const FollowerParams& p, double ioiBeats, double expectedBeats) {
  const double d = (ioiBeats - expectedBeats) / p.ioiStdBeats;
  return -0.5 * d * d - std::log(p.ioiStdBeats * std::sqrt(2.0 * std::numbers::pi));
}

/// log transition probability from position `from` by `step` positions.
/// Skips are truncated at the end of the score and renormalized; the last
/// position is absorbing.
inline double log_transition(const FollowerParams& p, std::size_t n, std::size_t from,
                             std::size_t step) {
  const std::size_t room = n - 1 - from;
  const std::size_t maxStep = std::min<std::size_t>(static_cast<std::size_t>(p.maxSkip), room);
  if (maxStep == 0) return step == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (step == 0) return std::log(p.selfLoopProb);
  if (step > maxStep) return -std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (std::size_t k = 1; k <= maxStep; ++k) z += std::pow(p.skipDecay, static_cast<double>(k - 1));
  return std::log(1.0 - p.selfLoopProb) + (step - 1) * std::log(p.skipDecay) - std::log(z);
}

inline FollowerState init_follower(const SoloScore& score, const FollowerParams& params) {
  if (score.empty()) throw std::invalid_argument("cannot follow an empty score");
  params.validate();
  FollowerState s;
  const std::size_t n = score.size();
  if (params.uniformStart) {
    s.logPosterior.assign(n, -std::log(static_cast<double>(n)));
  } else {
    s.logPosterior.assign(n, -std::numeric_limits<double>::infinity());
    s.logPosterior[0] = 0.0;
  }
  follower_detail::normalize_log(s);
  s.lastMapIndex = s.mapIndex;
  return s;
}

struct ObserveResult {
  FollowerState state;
  AlignmentEvent event;
};

/// One forward-algorithm step. `ioiSeconds` is the time since the previous
/// performed solo note-on (nullopt for the first note). The first
/// observation applies no transition: it weighs the initial distribution by
/// the pitch likelihood and labels the arrival as match or wrongNote.
inline ObserveResult observe(FollowerState state, const SoloScore& score,
                             const FollowerParams& params, const PerformedNote& note,
                             std::optional<double> ioiSeconds, double beatPeriod) {
  if (!(beatPeriod > 0.0)) throw std::invalid_argument("beat period must be positive");
  const std::size_t n = score.size();
  if (state.logPosterior.size() != n) throw std::invalid_argument("state does not match score");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<double> next(n, kNegInf);
  const bool first = !state.started;

  if (first) {
    for (std::size_t j = 0; j < n; ++j)
      next[j] = state.logPosterior[j] + log_pitch_likelihood(params, note.pitch, score.notes[j].pitch);
  } else {
    const double ioiBeats = ioiSeconds ? *ioiSeconds / beatPeriod : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double from = state.logPosterior[i];
      if (from == kNegInf) continue;
      const std::size_t last = std::min(n - 1, i + static_cast<std::size_t>(params.maxSkip));
      for (std::size_t j = i; j <= last; ++j) {
        double lp = from + log_transition(params, n, i, j - i);
        if (lp == kNegInf) continue;
        if (ioiSeconds)
          lp += log_ioi_likelihood(params, ioiBeats, score.notes[j].onset - score.notes[i].onset);
        next[j] = follower_detail::log_sum_exp(next[j], lp);
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      if (next[j] != kNegInf)
        next[j] += log_pitch_likelihood(params, note.pitch, score.notes[j].pitch);
  }

  const std::size_t previous = state.mapIndex;
  state.logPosterior = std::move(next);
  follower_detail::normalize_log(state);
  state.lastMapIndex = previous;
  state.lastEventTime = note.onsetSeconds;
  state.started = true;

  AlignmentEvent ev;
  ev.performedNote = note;
  ev.scoreIndex = state.mapIndex;
  ev.confidence = std::clamp(state.posterior[state.mapIndex], 0.0, 1.0);
  const bool advanced = first || state.mapIndex != previous;
  if (!advanced) ev.label = AlignmentLabel::insertion;
  else if (note.pitch == score.notes[state.mapIndex].pitch) ev.label = AlignmentLabel::match;
  else ev.label = AlignmentLabel::wrongNote;
  return {std::move(state), ev};
}

inline double map_position_beats(const FollowerState& state, const SoloScore& score) {
  return score.notes.at(state.mapIndex).onset;
}

}  // namespace accompanion
