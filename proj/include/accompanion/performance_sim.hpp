#pragma once

// Synthetic soloist: renders a solo score through a tempo curve with timing
// jitter, velocity noise and injected errors, plus an evaluation harness
// that runs the tracker against the known ground truth.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "accompanion/score.hpp"
#include "accompanion/solo_tracker.hpp"

namespace accompanion {

/// Tempo over [beginBeat, endBeat), linear in BPM from startBpm to endBpm.
struct TempoSegment {
  double beginBeat = 0.0;
  double endBeat = 0.0;
  double startBpm = 120.0;
  double endBpm = 120.0;
};

/// Piecewise tempo. Segments are sorted and non-overlapping; gaps and the
/// region past the last segment hold the preceding tempo constant, the region
/// before the first holds its start tempo.
class TempoCurve {
 public:
  TempoCurve() : TempoCurve(120.0) {}
  explicit TempoCurve(double bpm) { segments_.push_back({0.0, 0.0, bpm, bpm}); }
  explicit TempoCurve(std::vector<TempoSegment> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw std::invalid_argument("tempo curve needs a segment");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!(s.startBpm > 0.0) || !(s.endBpm > 0.0) || s.endBeat < s.beginBeat)
        throw std::invalid_argument("invalid tempo segment " + std::to_string(i));
      if (i > 0 && s.beginBeat < segments_[i - 1].endBeat)
        throw std::invalid_argument("tempo segments overlap at " + std::to_string(i));
    }
  }

  /// Tempo change from `before` to `after` BPM at `beat`.
  static TempoCurve step(double before, double after, double beat) {
    return TempoCurve({{0.0, beat, before, before}, {beat, beat, after, after}});
  }

  const std::vector<TempoSegment>& segments() const { return segments_; }

  double bpm_at(double beat) const {
    double bpm = segments_.front().startBpm;
    for (const auto& s : segments_) {
      if (beat < s.beginBeat) break;
      if (beat < s.endBeat) return lerp_bpm(s, beat);
      bpm = s.endBpm;
    }
    return bpm;
  }

  double beat_period_at(double beat) const { return 60.0 / bpm_at(beat); }

  /// Seconds elapsed from beat 0 to `beat`.
  double seconds_at(double beat) const {
    double t = 0.0, cursor = 0.0, bpm = segments_.front().startBpm;
    auto constant = [&](double to) {
      if (to > cursor) {
        t += 60.0 * (to - cursor) / bpm;
        cursor = to;
      }
    };
    for (const auto& s : segments_) {
      if (beat <= s.beginBeat) break;
      constant(s.beginBeat);
      const double end = std::min(beat, s.endBeat);
      if (end > cursor) {
        t += segment_seconds(s, cursor, end);
        cursor = end;
      }
      bpm = s.endBpm;
    }
    constant(beat);
    return t;
  }

 private:
  static double lerp_bpm(const TempoSegment& s, double beat) {
    const double span = s.endBeat - s.beginBeat;
    if (span <= 0.0) return s.endBpm;
    return s.startBpm + (s.endBpm - s.startBpm) * (beat - s.beginBeat) / span;
  }

  // integral of 60 / bpm(b) over [from, to] inside one segment
  static double segment_seconds(const TempoSegment& s, double from, double to) {
    const double a = lerp_bpm(s, from), b = lerp_bpm(s, to);
    if (std::abs(b - a) < 1e-12 * a) return 60.0 * (to - from) / a;
    const double slope = (s.endBpm - s.startBpm) / (s.endBeat - s.beginBeat);
    return 60.0 / slope * std::log(b / a);
  }

  std::vector<TempoSegment> segments_;
};

struct SimConfig {
  std::uint64_t seed = 0;
  TempoCurve tempoCurve;
  double timingJitterStd = 0.01;
  int velocityBase = 72;
  double velocityJitterStd = 6.0;
  double pInsert = 0.0;
  double pSkip = 0.0;
  double pWrongPitch = 0.0;
  int wrongPitchRange = 3;
  double articulation = 0.9;  // performed duration as a fraction of the notated one

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(pInsert) || !prob(pSkip) || !prob(pWrongPitch))
      throw std::invalid_argument("simulation probabilities out of range");
    if (pInsert + pSkip > 1.0) throw std::invalid_argument("pInsert + pSkip must not exceed 1");
    if (velocityBase < 1 || velocityBase > 127) throw std::invalid_argument("velocityBase out of range");
    if (timingJitterStd < 0.0 || velocityJitterStd < 0.0 || wrongPitchRange < 0)
      throw std::invalid_argument("negative simulation spread");
  }
};

enum class TruthKind { clean, wrongPitch, inserted };

struct TruthEntry {
  TruthKind kind = TruthKind::clean;
  std::optional<std::size_t> scoreIndex;  // empty for insertions
};

struct SimulatedPerformance {
  std::vector<PerformedNote> notes;
  std::vector<TruthEntry> truth;  // parallel to notes
  std::vector<std::size_t> skipped;
};

namespace sim_detail {

/// Portable draws on top of mt19937_64 (whose output sequence is fixed by
/// the standard, unlike the std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sim_detail

/// Renders the score. Insertions land 15-35% of the way from the previous
/// performed note and take a pitch near that note (a slip right after it).
inline SimulatedPerformance simulate(const SoloScore& score, const SimConfig& cfg) {
  cfg.validate();
  sim_detail::Rng rng(cfg.seed);
  SimulatedPerformance out;
  std::optional<std::size_t> lastPlayed;  // score index of the previous played note
  double lastOnset = 0.0;

  for (std::size_t i = 0; i < score.notes.size(); ++i) {
    const auto& note = score.notes[i];
    const double u = rng.uniform();
    const double ideal = cfg.tempoCurve.seconds_at(note.onset);
    double onset = ideal + cfg.timingJitterStd * rng.normal();
    const double wrongDraw = rng.uniform();
    const int wrongOffset = rng.integer(1, std::max(1, cfg.wrongPitchRange)) * (rng.uniform() < 0.5 ? -1 : 1);
    const double velocityNoise = rng.normal();
    const double insertFraction = 0.15 + 0.2 * rng.uniform();
    const int insertOffset = rng.integer(-cfg.wrongPitchRange, cfg.wrongPitchRange);
    const double insertVelocityNoise = rng.normal();

    if (u < cfg.pSkip) {
      out.skipped.push_back(i);
      continue;
    }
    if (!out.notes.empty()) onset = std::max(onset, lastOnset + 1e-3);
    onset = std::max(onset, 0.0);

    if (u < cfg.pSkip + cfg.pInsert && lastPlayed) {
      PerformedNote extra;
      extra.pitch = std::clamp(score.notes[*lastPlayed].pitch + insertOffset, 0, 127);
      extra.onsetSeconds = lastOnset + insertFraction * (onset - lastOnset);
      extra.velocity = std::clamp(
          static_cast<int>(std::lround(cfg.velocityBase + cfg.velocityJitterStd * insertVelocityNoise)), 1, 127);
      extra.durationSeconds = std::max(1e-3, 0.5 * (onset - extra.onsetSeconds));
      out.notes.push_back(extra);
      out.truth.push_back({TruthKind::inserted, std::nullopt});
    }

    PerformedNote played;
    played.pitch = note.pitch;
    TruthKind kind = TruthKind::clean;
    if (wrongDraw < cfg.pWrongPitch && cfg.wrongPitchRange > 0) {
      played.pitch = std::clamp(note.pitch + wrongOffset, 0, 127);
      if (played.pitch != note.pitch) kind = TruthKind::wrongPitch;
    }
    played.onsetSeconds = onset;
    played.velocity = std::clamp(
        static_cast<int>(std::lround(cfg.velocityBase + cfg.velocityJitterStd * velocityNoise)), 1, 127);
    const double notated =
        cfg.tempoCurve.seconds_at(note.onset + note.duration) - cfg.tempoCurve.seconds_at(note.onset);
    played.durationSeconds = std::max(1e-3, cfg.articulation * notated);
    out.notes.push_back(played);
    out.truth.push_back({kind, i});
    lastPlayed = i;
    lastOnset = onset;
  }
  return out;
}

struct EvalReport {
  double matchRate = 1.0;     // score notes played: labeled match at the true index
  double positionRate = 1.0;  // score notes played: MAP at the true index
  double meanAbsTempoError = 0.0;
  double maxLatency = 0.0;  // wall-clock seconds per event; not deterministic
  std::size_t eventCount = 0;
};

inline constexpr std::size_t kTempoBurnIn = 8;

/// Runs the follower and tempo tracker over a simulated performance.
inline EvalReport evaluate(const SoloScore& score, const SimConfig& cfg,
                           const FollowerParams& followerParams = {},
                           const TempoParams& tempoParams = {}) {
  EvalReport report;
  if (score.empty()) return report;
  const auto perf = simulate(score, cfg);
  report.eventCount = perf.notes.size();
  if (perf.notes.empty()) return report;

  SoloTracker tracker(score, followerParams, tempoParams);
  std::size_t scored = 0, matched = 0, located = 0, tempoCount = 0;
  double tempoErr = 0.0;
  for (std::size_t k = 0; k < perf.notes.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    const AlignmentEvent ev = tracker.on_note(perf.notes[k]);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    report.maxLatency = std::max(report.maxLatency, took.count());

    const auto& truth = perf.truth[k];
    if (truth.kind == TruthKind::inserted) continue;
    const std::size_t idx = *truth.scoreIndex;
    if (ev.scoreIndex == idx) {
      ++located;
      if (ev.label == AlignmentLabel::match) ++matched;
    }
    if (scored >= kTempoBurnIn) {
      const double truePeriod = cfg.tempoCurve.beat_period_at(score.notes[idx].onset);
      tempoErr += std::abs(tracker.beat_period() - truePeriod) / truePeriod;
      ++tempoCount;
    }
    ++scored;
  }
  if (scored > 0) {
    report.matchRate = static_cast<double>(matched) / scored;
    report.positionRate = static_cast<double>(located) / scored;
  }
  if (tempoCount > 0) report.meanAbsTempoError = tempoErr / tempoCount;
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.timingJitterStd = j.value("timing_jitter_std", c.timingJitterStd);
  c.velocityBase = j.value("velocity_base", c.velocityBase);
  c.velocityJitterStd = j.value("velocity_jitter_std", c.velocityJitterStd);
  c.pInsert = j.value("p_insert", c.pInsert);
  c.pSkip = j.value("p_skip", c.pSkip);
  c.pWrongPitch = j.value("p_wrong_pitch", c.pWrongPitch);
  c.wrongPitchRange = j.value("wrong_pitch_range", c.wrongPitchRange);
  c.articulation = j.value("articulation", c.articulation);
  if (j.contains("tempo_curve")) {
    const auto& tc = j.at("tempo_curve");
    if (tc.is_number()) {
      c.tempoCurve = TempoCurve(tc.get<double>());
    } else {
      std::vector<TempoSegment> segs;
      for (const auto& s : tc) {
        TempoSegment seg;
        seg.beginBeat = s.value("begin_beat", 0.0);
        seg.endBeat = s.value("end_beat", seg.beginBeat);
        seg.startBpm = s.at("start_bpm").get<double>();
        seg.endBpm = s.value("end_bpm", seg.startBpm);
        segs.push_back(seg);
      }
      c.tempoCurve = TempoCurve(std::move(segs));
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const SimConfig& c) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : c.tempoCurve.segments())
    curve.push_back({{"begin_beat", s.beginBeat},
                     {"end_beat", s.endBeat},
                     {"start_bpm", s.startBpm},
                     {"end_bpm", s.endBpm}});
  return {{"seed", c.seed},
          {"tempo_curve", curve},
          {"timing_jitter_std", c.timingJitterStd},
          {"velocity_base", c.velocityBase},
          {"velocity_jitter_std", c.velocityJitterStd},
          {"p_insert", c.pInsert},
          {"p_skip", c.pSkip},
          {"p_wrong_pitch", c.pWrongPitch},
          {"wrong_pitch_range", c.wrongPitchRange},
          {"articulation", c.articulation}};
}

/// `includeTiming` adds the wall-clock latency, which differs run to run.
inline nlohmann::json to_json(const EvalReport& r, bool includeTiming = false) {
  nlohmann::json j = {{"event_count", r.eventCount},
                      {"match_rate", r.matchRate},
                      {"position_rate", r.positionRate},
                      {"mean_abs_tempo_error", r.meanAbsTempoError}};
  if (includeTiming) j["max_latency"] = r.maxLatency;
  return j;
}

}  // namespace accompanion
