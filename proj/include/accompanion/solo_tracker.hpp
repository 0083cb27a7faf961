#pragma once

#include <optional>
#include <utility>

#include "accompanion/score_follower.hpp"
#include "accompanion/tempo_tracker.hpp"

namespace accompanion {

/// Follower plus tempo tracker for one solo stream.
///
/// The follower sees the IOI between consecutive performed note-ons. The
/// tempo filter sees the interval between consecutive anchored notes (match
/// or wrongNote) against the score distance between their positions, so an
/// inserted note does not split the observed interval.
class SoloTracker {
 public:
  SoloTracker(SoloScore score, FollowerParams followerParams = {}, TempoParams tempoParams = {})
      : score_(std::move(score)), followerParams_(followerParams), tempoParams_(tempoParams),
        follower_(init_follower(score_, followerParams_)), tempo_(init_tempo(tempoParams_)) {}

  AlignmentEvent on_note(const PerformedNote& note) {
    std::optional<double> ioi;
    if (lastOnset_) ioi = note.onsetSeconds - *lastOnset_;
    lastOnset_ = note.onsetSeconds;

    auto result = observe(std::move(follower_), score_, followerParams_, note, ioi,
                          current_beat_period(tempo_));
    follower_ = std::move(result.state);
    const AlignmentEvent& ev = result.event;

    if (ev.label != AlignmentLabel::insertion) {
      if (anchor_) {
        const double beats = score_.notes[ev.scoreIndex].onset - score_.notes[anchor_->first].onset;
        const double seconds = note.onsetSeconds - anchor_->second;
        // a backward MAP correction carries no usable tempo observation
        if (beats > 0.0 && seconds > 0.0)
          tempo_ = track_event(std::move(tempo_), tempoParams_, seconds, beats, ev.label);
      }
      anchor_ = std::make_pair(ev.scoreIndex, note.onsetSeconds);
    }
    return ev;
  }

  const SoloScore& score() const { return score_; }
  const FollowerState& follower() const { return follower_; }
  const TempoState& tempo() const { return tempo_; }
  double beat_period() const { return current_beat_period(tempo_); }
  double score_beat() const { return map_position_beats(follower_, score_); }

 private:
  SoloScore score_;
  FollowerParams followerParams_;
  TempoParams tempoParams_;
  FollowerState follower_;
  TempoState tempo_;
  std::optional<double> lastOnset_;
  std::optional<std::pair<std::size_t, double>> anchor_;
};

}  // namespace accompanion
