#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace accompanion {

enum class Part { solo, accompaniment };

/// A symbolic note in the score. Onset and duration are in beats.
struct ScoreNote {
  int id = 0;
  int pitch = 60;
  double onset = 0.0;
  double duration = 1.0;
  Part part = Part::solo;

  bool valid() const {
    return pitch >= 0 && pitch <= 127 && duration > 0.0 && onset >= 0.0;
  }
};

/// Monophonic solo line, ordered by onset.
struct SoloScore {
  std::vector<ScoreNote> notes;

  std::size_t size() const { return notes.size(); }
  bool empty() const { return notes.empty(); }

  /// Beats between consecutive onsets; one shorter than `notes`.
  std::vector<double> iois() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < notes.size(); ++i)
      out.push_back(notes[i].onset - notes[i - 1].onset);
    return out;
  }
};

struct OnsetGroup {
  double onsetBeats = 0.0;
  std::vector<int> noteIds;
};

/// Chord-grouped accompaniment. `notes` is the note table; groups refer to
/// it by `ScoreNote::id`.
struct AccompanimentScore {
  std::vector<ScoreNote> notes;
  std::vector<OnsetGroup> onsets;

  bool empty() const { return notes.empty(); }

  const ScoreNote& note(int id) const {
    auto it = std::find_if(notes.begin(), notes.end(),
                           [id](const ScoreNote& n) { return n.id == id; });
    if (it == notes.end())
      throw std::out_of_range("no accompaniment note with id " + std::to_string(id));
    return *it;
  }

  std::size_t indexOf(int id) const {
    auto it = std::find_if(notes.begin(), notes.end(),
                           [id](const ScoreNote& n) { return n.id == id; });
    if (it == notes.end())
      throw std::out_of_range("no accompaniment note with id " + std::to_string(id));
    return static_cast<std::size_t>(it - notes.begin());
  }
};

/// A note as played. Times are in seconds.
struct PerformedNote {
  int pitch = 60;
  double onsetSeconds = 0.0;
  int velocity = 64;
  double durationSeconds = 0.0;  // 0 while still sounding
};

inline constexpr double kOnsetTolerance = 1e-9;

/// Groups notes sharing an onset (within kOnsetTolerance) into chords.
/// Notes inside a group keep their input order after a stable sort by onset.
inline AccompanimentScore group_onsets(std::vector<ScoreNote> notes) {
  std::stable_sort(notes.begin(), notes.end(),
                   [](const ScoreNote& a, const ScoreNote& b) { return a.onset < b.onset; });
  AccompanimentScore out;
  for (const auto& n : notes) {
    if (out.onsets.empty() || n.onset - out.onsets.back().onsetBeats > kOnsetTolerance)
      out.onsets.push_back({n.onset, {}});
    out.onsets.back().noteIds.push_back(n.id);
  }
  out.notes = std::move(notes);
  return out;
}

/// Index of the first solo note whose onset does not strictly follow its
/// predecessor, or nullopt for a valid monophonic line.
inline std::optional<std::size_t> validate_solo(const SoloScore& score) {
  for (std::size_t i = 1; i < score.notes.size(); ++i) {
    if (score.notes[i].onset - score.notes[i - 1].onset <= kOnsetTolerance) return i;
  }
  return std::nullopt;
}

}  // namespace accompanion
