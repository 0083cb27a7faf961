#pragma once

// Turns follower position, tempo estimate and precomputed expressive
// targets into absolute-time accompaniment notes. Every solo event requeues
// all not-yet-emitted notes; emitted notes are never retracted.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "accompanion/basis_mixer.hpp"
#include "accompanion/score.hpp"
#include "accompanion/score_follower.hpp"
#include "accompanion/tempo_tracker.hpp"

namespace accompanion {

enum class ScalingTarget { loudnessTrend, bp, loudnessDev, timing, articulation };

inline constexpr std::array<ScalingTarget, 5> kScalingTargets{
    ScalingTarget::loudnessTrend, ScalingTarget::bp, ScalingTarget::loudnessDev,
    ScalingTarget::timing, ScalingTarget::articulation};

inline const char* to_string(ScalingTarget t) {
  switch (t) {
    case ScalingTarget::loudnessTrend: return "loudness_trend";
    case ScalingTarget::bp: return "bp";
    case ScalingTarget::loudnessDev: return "loudness_dev";
    case ScalingTarget::timing: return "timing";
    case ScalingTarget::articulation: return "articulation";
  }
  return "?";
}

inline std::optional<ScalingTarget> parse_scaling_target(std::string_view name) {
  for (auto t : kScalingTargets)
    if (name == to_string(t)) return t;
  return std::nullopt;
}

inline constexpr double kMaxScaling = 2.0;

struct ScalingControls {
  double loudnessTrend = 1.0;
  double bpRatio = 1.0;
  double loudnessDev = 1.0;
  double timing = 1.0;
  double articulation = 1.0;

  double& operator[](ScalingTarget t) {
    switch (t) {
      case ScalingTarget::loudnessTrend: return loudnessTrend;
      case ScalingTarget::bp: return bpRatio;
      case ScalingTarget::loudnessDev: return loudnessDev;
      case ScalingTarget::timing: return timing;
      case ScalingTarget::articulation: return articulation;
    }
    return loudnessTrend;
  }
  double operator[](ScalingTarget t) const { return const_cast<ScalingControls&>(*this)[t]; }

  static ScalingControls uniform(double s) { return {s, s, s, s, s}; }
};

/// Ratio targets scale in the log domain around 1.
inline double scale_ratio(double value, double s) { return std::exp(s * std::log(value)); }

/// Additive targets scale linearly around 0.
inline double scale_offset(double value, double s) { return s * value; }

enum class EventState { pending, emitted, cancelled };

struct ScheduledEvent {
  int noteId = 0;
  std::size_t noteIndex = 0;  // into AccompanimentScore::notes
  int pitch = 0;
  int velocity = 64;
  double onTimeSeconds = 0.0;
  double offTimeSeconds = 0.0;
  EventState state = EventState::pending;
};

struct EngineConfig {
  double velocitySmoothing = 0.3;  // EMA weight of the newest solo velocity
  double initialVelocity = 64.0;
  double freezeAfterSeconds = 5.0;  // hold the queue when the soloist stops
};

struct EngineState {
  double soloRefVelocity = 64.0;
  double soloRefBeat = 0.0;
  double soloRefTime = 0.0;
  double lastSoloTime = 0.0;
  bool anchored = false;
  bool velocitySeen = false;
  bool inputFinished = false;
  std::vector<ScheduledEvent> pendingQueue;  // sorted by onTime
  ScalingControls scaling;
};

class AccompanimentEngine {
 public:
  AccompanimentEngine(SoloScore solo, AccompanimentScore accomp, PieceTargets targets,
                      EngineConfig config = {})
      : solo_(std::move(solo)), accomp_(std::move(accomp)), targets_(std::move(targets)),
        config_(config), status_(accomp_.notes.size(), EventState::pending) {
    if (targets_.onsets.size() != accomp_.onsets.size() ||
        targets_.notes.size() != accomp_.notes.size())
      throw std::invalid_argument("targets do not match the accompaniment score");
    state_.soloRefVelocity = std::clamp(config_.initialVelocity, 1.0, 127.0);
    members_.resize(accomp_.onsets.size());
    for (std::size_t g = 0; g < accomp_.onsets.size(); ++g)
      for (int id : accomp_.onsets[g].noteIds) members_[g].push_back(accomp_.indexOf(id));
  }

  const EngineState& state() const { return state_; }
  const AccompanimentScore& accompaniment() const { return accomp_; }
  const PieceTargets& targets() const { return targets_; }
  EventState status(std::size_t noteIndex) const { return status_.at(noteIndex); }

  /// Clamps to [0, 2]; takes effect at the next reschedule.
  void set_scaling(std::string_view target, double s) {
    auto t = parse_scaling_target(target);
    if (!t) throw std::invalid_argument("unknown scaling target '" + std::string(target) + "'");
    set_scaling(*t, s);
  }
  void set_scaling(ScalingTarget target, double s) {
    state_.scaling[target] = std::isfinite(s) ? std::clamp(s, 0.0, kMaxScaling) : 1.0;
  }

  /// Updates the velocity reference and positional anchor from an aligned
  /// solo note, then requeues every note not yet emitted. `event` times are
  /// the current clock.
  void on_solo_event(const AlignmentEvent& event, const TempoState& tempo) {
    const auto& played = event.performedNote;
    const double v = std::clamp<double>(played.velocity, 1, 127);
    if (!state_.velocitySeen) {
      state_.soloRefVelocity = v;
      state_.velocitySeen = true;
    } else {
      state_.soloRefVelocity =
          config_.velocitySmoothing * v + (1.0 - config_.velocitySmoothing) * state_.soloRefVelocity;
    }
    state_.soloRefVelocity = std::clamp(state_.soloRefVelocity, 1.0, 127.0);
    state_.lastSoloTime = played.onsetSeconds;
    if (event.label != AlignmentLabel::insertion) {
      state_.soloRefBeat = solo_.notes.at(event.scoreIndex).onset;
      state_.soloRefTime = played.onsetSeconds;
      state_.anchored = true;
    }
    reschedule(current_beat_period(tempo), played.onsetSeconds);
  }

  /// Recomputes the schedule at time `now` with the given solo beat period.
  void reschedule(double beatPeriod, double now) {
    state_.pendingQueue.clear();
    if (!state_.anchored) return;
    const auto& sc = state_.scaling;

    for (std::size_t g = 0; g < accomp_.onsets.size(); ++g) {
      const auto& group = accomp_.onsets[g];
      const bool behind = group.onsetBeats < state_.soloRefBeat - kOnsetTolerance;

      const double accompBeatPeriod = beatPeriod * scale_ratio(targets_.onsets[g].bpRatio, sc.bpRatio);
      const double groupOn =
          state_.soloRefTime + (group.onsetBeats - state_.soloRefBeat) * accompBeatPeriod;
      const double chordMax = std::clamp(
          std::round(state_.soloRefVelocity *
                     scale_ratio(targets_.onsets[g].loudnessTrend, sc.loudnessTrend)),
          1.0, 127.0);
      double maxDev = -std::numeric_limits<double>::infinity();
      for (std::size_t idx : members_[g])
        maxDev = std::max(maxDev, scale_offset(targets_.notes[idx].loudnessDev, sc.loudnessDev));

      for (std::size_t idx : members_[g]) {
        if (status_[idx] != EventState::pending) continue;
        if (behind) {
          status_[idx] = EventState::cancelled;
          continue;
        }
        const auto& note = accomp_.notes[idx];
        const auto& nt = targets_.notes[idx];
        ScheduledEvent ev;
        ev.noteId = note.id;
        ev.noteIndex = idx;
        ev.pitch = note.pitch;
        ev.velocity = static_cast<int>(std::clamp(
            std::round(chordMax + scale_offset(nt.loudnessDev, sc.loudnessDev) - maxDev), 1.0, 127.0));
        ev.onTimeSeconds = groupOn + scale_offset(nt.timing, sc.timing);
        const double length =
            note.duration * accompBeatPeriod * scale_ratio(nt.articulation, sc.articulation);
        if (ev.onTimeSeconds < now) ev.onTimeSeconds = now;  // late: fire immediately
        ev.offTimeSeconds = ev.onTimeSeconds + length;
        state_.pendingQueue.push_back(ev);
      }
    }
    std::stable_sort(state_.pendingQueue.begin(), state_.pendingQueue.end(),
                     [](const ScheduledEvent& a, const ScheduledEvent& b) {
                       return a.onTimeSeconds < b.onTimeSeconds;
                     });
  }

  /// Marks the solo input as ended; frozen notes are released.
  void finish_input() { state_.inputFinished = true; }

  /// Time of the next emittable note-on, if any. Notes further than
  /// freezeAfterSeconds past the last solo event are held while input is live.
  std::optional<double> next_due_time() const {
    if (state_.pendingQueue.empty()) return std::nullopt;
    const double t = state_.pendingQueue.front().onTimeSeconds;
    if (frozen(t)) return std::nullopt;
    return t;
  }

  /// Emits and returns every queued note with onTime <= now, in time order.
  std::vector<ScheduledEvent> pop_due(double now) {
    std::vector<ScheduledEvent> out;
    auto& q = state_.pendingQueue;
    std::size_t n = 0;
    while (n < q.size() && q[n].onTimeSeconds <= now && !frozen(q[n].onTimeSeconds)) {
      q[n].state = EventState::emitted;
      status_[q[n].noteIndex] = EventState::emitted;
      out.push_back(q[n]);
      ++n;
    }
    q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

 private:
  bool frozen(double t) const {
    return !state_.inputFinished && t > state_.lastSoloTime + config_.freezeAfterSeconds;
  }

  SoloScore solo_;
  AccompanimentScore accomp_;
  PieceTargets targets_;
  EngineConfig config_;
  EngineState state_;
  std::vector<EventState> status_;
  std::vector<std::vector<std::size_t>> members_;  // note indices per onset group
};

}  // namespace accompanion
