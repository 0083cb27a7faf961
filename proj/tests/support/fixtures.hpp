#pragma once

// Score builders shared by the test suites.

#include <cstdint>
#include <random>
#include <vector>

#include "accompanion/score.hpp"
#include "accompanion/smf.hpp"

namespace accompanion::test {

inline SoloScore solo_from(const std::vector<int>& pitches, const std::vector<double>& onsets) {
  SoloScore s;
  for (std::size_t i = 0; i < pitches.size(); ++i) {
    double dur = i + 1 < onsets.size() ? onsets[i + 1] - onsets[i] : 1.0;
    s.notes.push_back({static_cast<int>(i), pitches[i], onsets[i], dur, Part::solo});
  }
  return s;
}

/// Monophonic line with IOIs drawn from {0.5, 1, 1, 1.5, 2} and a stepwise
/// melody (steps of -4..4 semitones, never repeating a pitch).
inline SoloScore random_solo(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double iois[] = {0.5, 1.0, 1.0, 1.5, 2.0};
  std::vector<int> pitches;
  std::vector<double> onsets;
  int pitch = 60 + static_cast<int>(rng() % 12);
  double beat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pitches.push_back(pitch);
    onsets.push_back(beat);
    beat += iois[rng() % 5];
    int step = 0;
    while (step == 0) step = static_cast<int>(rng() % 9) - 4;
    pitch += step;
    if (pitch < 48 || pitch > 84) pitch -= 2 * step;
  }
  return solo_from(pitches, onsets);
}

/// Block chords on every beat from 0 to `beats` - 1, ids starting at `firstId`.
inline AccompanimentScore chord_accompaniment(int beats, int firstId = 1000) {
  std::vector<ScoreNote> notes;
  int id = firstId;
  for (int b = 0; b < beats; ++b) {
    const int root = 48 + (b % 4) * 2;
    for (int offset : {0, 4, 7})
      notes.push_back({id++, root + offset, static_cast<double>(b), 0.9, Part::accompaniment});
  }
  return group_onsets(std::move(notes));
}

/// Minimal SMF with one header and the given raw track bodies (without the
/// MTrk header; end-of-track must be included by the caller if wanted).
inline std::vector<std::uint8_t> smf_bytes(int format, int division,
                                           const std::vector<std::vector<std::uint8_t>>& tracks) {
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, static_cast<std::uint8_t>(format),
                                0, static_cast<std::uint8_t>(tracks.size()),
                                static_cast<std::uint8_t>(division >> 8),
                                static_cast<std::uint8_t>(division & 0xFF)};
  for (const auto& body : tracks) {
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    const auto len = static_cast<std::uint32_t>(body.size());
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(len >> s));
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

}  // namespace accompanion::test
