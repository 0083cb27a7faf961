#pragma once

// Standard MIDI File reading and writing (format 0/1, ticks-per-quarter).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "accompanion/score.hpp"

namespace accompanion {

class SmfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which note-carrying part becomes solo and which accompaniment. Indices are
/// file track numbers for format 1 and MIDI channels (0-15) for format 0.
/// Unset means "first / second note-carrying part".
struct TrackMapping {
  std::optional<int> soloTrack;
  std::optional<int> accompTrack;
};

struct ParsedScore {
  SoloScore solo;
  AccompanimentScore accomp;
  int ticksPerBeat = 480;
};

namespace smf {

/// A matched note-on/note-off pair in ticks.
struct RawNote {
  int track = 0;
  int channel = 0;
  int pitch = 0;
  int velocity = 0;
  std::uint64_t onTick = 0;
  std::uint64_t offTick = 0;
};

struct RawFile {
  int format = 1;
  int ticksPerBeat = 480;
  int trackCount = 0;
  std::vector<RawNote> notes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool atEnd() const { return pos_ >= bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint8_t peek() const {
    if (atEnd()) throw SmfError("truncated data at byte " + std::to_string(pos_));
    return bytes_[pos_];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] << 8 | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string tag() {
    need(4);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  /// Variable-length quantity, at most four bytes.
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = v << 7 | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw SmfError("variable-length quantity longer than 4 bytes at byte " + std::to_string(pos_));
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n)
      throw SmfError("truncated data: need " + std::to_string(n) + " bytes at byte " +
                     std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t decode_vlq(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  return r.vlq();
}

inline void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value) {
  if (value > 0x0FFFFFFF) throw SmfError("value too large for variable-length quantity");
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = value & 0x7F;
  while (value >>= 7) buf[n++] = static_cast<std::uint8_t>((value & 0x7F) | 0x80);
  while (n) out.push_back(buf[--n]);
}

namespace detail {

inline void read_track(std::span<const std::uint8_t> data, int track, RawFile& file) {
  Reader r(data);
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  // FIFO of (onTick, velocity) per (channel, pitch).
  std::map<std::pair<int, int>, std::deque<std::pair<std::uint64_t, int>>> open;

  while (!r.atEnd()) {
    tick += r.vlq();
    std::uint8_t status = r.peek();
    if (status & 0x80) {
      r.u8();
    } else {
      if (!running)
        throw SmfError("data byte without status in track " + std::to_string(track) +
                       " at tick " + std::to_string(tick));
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      std::uint8_t type = r.u8();
      std::uint32_t len = r.vlq();
      r.skip(len);
      if (type == 0x2F) break;
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      r.skip(r.vlq());
      continue;
    }
    if (status >= 0xF0)
      throw SmfError("unexpected system status byte " + std::to_string(status) + " in track " +
                     std::to_string(track));

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    const int dataBytes = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
    std::uint8_t d1 = r.u8();
    std::uint8_t d2 = dataBytes == 2 ? r.u8() : 0;
    if ((d1 | d2) & 0x80)
      throw SmfError("status byte where data byte expected in track " + std::to_string(track));

    const bool on = kind == 0x90 && d2 > 0;
    const bool off = kind == 0x80 || (kind == 0x90 && d2 == 0);
    if (on) {
      open[{channel, d1}].emplace_back(tick, d2);
    } else if (off) {
      auto it = open.find({channel, d1});
      if (it == open.end() || it->second.empty()) continue;  // stray note-off
      auto [onTick, vel] = it->second.front();
      it->second.pop_front();
      if (tick > onTick) file.notes.push_back({track, channel, d1, vel, onTick, tick});
      // zero-length notes carry no duration and are dropped
    }
  }

  for (const auto& [key, fifo] : open) {
    if (!fifo.empty())
      throw SmfError("unmatched note-on (pitch " + std::to_string(key.second) + ", channel " +
                     std::to_string(key.first) + ") at tick " +
                     std::to_string(fifo.front().first) + " in track " + std::to_string(track));
  }
}

}  // namespace detail

/// Reads every matched note from the file.
inline RawFile read_notes(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.remaining() < 14 || r.tag() != "MThd") throw SmfError("malformed header: missing MThd");
  std::uint32_t headerLen = r.u32();
  if (headerLen < 6) throw SmfError("malformed header: length " + std::to_string(headerLen));
  RawFile file;
  file.format = r.u16();
  int ntrks = r.u16();
  std::uint16_t division = r.u16();
  r.skip(headerLen - 6);
  if (file.format > 1)
    throw SmfError("unsupported SMF format " + std::to_string(file.format));
  if (division & 0x8000) throw SmfError("SMPTE time division is not supported");
  if (division == 0) throw SmfError("malformed header: zero ticks per beat");
  file.ticksPerBeat = division;

  int track = 0;
  while (track < ntrks) {
    if (r.atEnd())
      throw SmfError("truncated file: expected " + std::to_string(ntrks) + " tracks, found " +
                     std::to_string(track));
    std::string id = r.tag();
    std::uint32_t len = r.u32();
    if (len > r.remaining())
      throw SmfError("truncated chunk '" + id + "': declared " + std::to_string(len) +
                     " bytes, " + std::to_string(r.remaining()) + " available");
    auto body = r.take(len);
    if (id != "MTrk") continue;
    detail::read_track(body, track, file);
    ++track;
  }
  file.trackCount = track;
  return file;
}

}  // namespace smf

/// Parses a score file into solo and accompaniment parts. Beats are ticks
/// divided by the file's ticks-per-quarter; tempo meta events are ignored.
inline ParsedScore parse_smf(std::span<const std::uint8_t> bytes, const TrackMapping& mapping = {}) {
  smf::RawFile raw = smf::read_notes(bytes);

  // Format 0 files carry their parts on channels; format 1 on tracks.
  auto partOf = [&](const smf::RawNote& n) { return raw.format == 0 ? n.channel : n.track; };
  std::vector<int> parts;
  for (const auto& n : raw.notes) {
    int p = partOf(n);
    if (std::find(parts.begin(), parts.end(), p) == parts.end()) parts.push_back(p);
  }
  std::sort(parts.begin(), parts.end());

  std::optional<int> soloPart = mapping.soloTrack;
  std::optional<int> accompPart = mapping.accompTrack;
  if (!soloPart) {
    for (int p : parts)
      if (p != accompPart) {
        soloPart = p;
        break;
      }
  }
  if (!accompPart) {
    for (int p : parts)
      if (p != soloPart) {
        accompPart = p;
        break;
      }
  }
  if (soloPart && accompPart && *soloPart == *accompPart)
    throw SmfError("solo and accompaniment mapped to the same part " + std::to_string(*soloPart));

  ParsedScore out;
  out.ticksPerBeat = raw.ticksPerBeat;
  const double tpb = raw.ticksPerBeat;
  std::vector<smf::RawNote> soloRaw, accompRaw;
  for (const auto& n : raw.notes) {
    int p = partOf(n);
    if (soloPart && p == *soloPart) soloRaw.push_back(n);
    else if (accompPart && p == *accompPart) accompRaw.push_back(n);
  }
  auto byTime = [](const smf::RawNote& a, const smf::RawNote& b) {
    return a.onTick != b.onTick ? a.onTick < b.onTick : a.pitch < b.pitch;
  };
  std::stable_sort(soloRaw.begin(), soloRaw.end(), byTime);
  std::stable_sort(accompRaw.begin(), accompRaw.end(), byTime);

  int nextId = 0;
  for (const auto& n : soloRaw)
    out.solo.notes.push_back({nextId++, n.pitch, n.onTick / tpb, (n.offTick - n.onTick) / tpb,
                              Part::solo});
  if (auto bad = validate_solo(out.solo)) {
    const auto& n = soloRaw[*bad];
    throw SmfError("solo part is not monophonic: two notes start at tick " +
                   std::to_string(n.onTick));
  }
  std::vector<ScoreNote> accomp;
  for (const auto& n : accompRaw)
    accomp.push_back({nextId++, n.pitch, n.onTick / tpb, (n.offTick - n.onTick) / tpb,
                      Part::accompaniment});
  out.accomp = group_onsets(std::move(accomp));
  return out;
}

namespace smf {

/// One channel message or meta event at an absolute tick.
struct TimedMessage {
  std::uint64_t tick = 0;
  std::vector<std::uint8_t> bytes;  // status + data, or FF type len data
};

struct TrackData {
  std::vector<TimedMessage> events;
};

inline TimedMessage note_on(std::uint64_t tick, int channel, int pitch, int velocity) {
  return {tick, {static_cast<std::uint8_t>(0x90 | channel), static_cast<std::uint8_t>(pitch),
                 static_cast<std::uint8_t>(velocity)}};
}
inline TimedMessage note_off(std::uint64_t tick, int channel, int pitch) {
  return {tick, {static_cast<std::uint8_t>(0x80 | channel), static_cast<std::uint8_t>(pitch), 0}};
}
inline TimedMessage tempo_meta(std::uint64_t tick, std::uint32_t usPerQuarter) {
  return {tick, {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(usPerQuarter >> 16),
                 static_cast<std::uint8_t>(usPerQuarter >> 8),
                 static_cast<std::uint8_t>(usPerQuarter)}};
}
inline TimedMessage track_name(const std::string& name) {
  TimedMessage m{0, {0xFF, 0x03}};
  append_vlq(m.bytes, static_cast<std::uint32_t>(name.size()));
  m.bytes.insert(m.bytes.end(), name.begin(), name.end());
  return m;
}

/// Serializes tracks to SMF bytes using running status. Events are stably
/// ordered by tick with note-offs ahead of note-ons on the same tick.
inline std::vector<std::uint8_t> write(int format, int ticksPerBeat, std::vector<TrackData> tracks) {
  if (ticksPerBeat <= 0 || ticksPerBeat > 0x7FFF) throw SmfError("ticks per beat out of range");
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd', 0, 0, 0, 6};
  auto put16 = [&](int v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
  };
  put16(format);
  put16(static_cast<int>(tracks.size()));
  put16(ticksPerBeat);

  for (auto& track : tracks) {
    auto rank = [](const TimedMessage& m) {
      if (m.bytes.empty()) return 2;
      int kind = m.bytes[0] & 0xF0;
      if (m.bytes[0] == 0xFF) return 0;
      if (kind == 0x80 || (kind == 0x90 && m.bytes.size() > 2 && m.bytes[2] == 0)) return 1;
      return 2;
    };
    std::stable_sort(track.events.begin(), track.events.end(),
                     [&](const TimedMessage& a, const TimedMessage& b) {
                       return a.tick != b.tick ? a.tick < b.tick : rank(a) < rank(b);
                     });
    std::vector<std::uint8_t> body;
    std::uint64_t last = 0;
    std::uint8_t running = 0;
    for (const auto& ev : track.events) {
      if (ev.bytes.empty()) continue;
      append_vlq(body, static_cast<std::uint32_t>(ev.tick - last));
      last = ev.tick;
      std::uint8_t status = ev.bytes[0];
      if (status < 0xF0 && status == running) {
        body.insert(body.end(), ev.bytes.begin() + 1, ev.bytes.end());
      } else {
        body.insert(body.end(), ev.bytes.begin(), ev.bytes.end());
        running = status < 0xF0 ? status : 0;
      }
    }
    body.insert(body.end(), {0x00, 0xFF, 0x2F, 0x00});
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    std::uint32_t len = static_cast<std::uint32_t>(body.size());
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(len >> s));
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

inline std::uint64_t beats_to_ticks(double beats, int ticksPerBeat) {
  return static_cast<std::uint64_t>(std::llround(beats * ticksPerBeat));
}

}  // namespace smf

/// Writes a score as format 1: tempo track, solo track, accompaniment track.
inline std::vector<std::uint8_t> write_smf(const ParsedScore& score) {
  const int tpb = score.ticksPerBeat;
  std::vector<smf::TrackData> tracks(3);
  tracks[0].events.push_back(smf::tempo_meta(0, 500000));
  auto add = [&](smf::TrackData& t, const ScoreNote& n, int channel) {
    auto on = smf::beats_to_ticks(n.onset, tpb);
    auto off = smf::beats_to_ticks(n.onset + n.duration, tpb);
    t.events.push_back(smf::note_on(on, channel, n.pitch, 80));
    t.events.push_back(smf::note_off(off, channel, n.pitch));
  };
  for (const auto& n : score.solo.notes) add(tracks[1], n, 0);
  for (const auto& n : score.accomp.notes) add(tracks[2], n, 1);
  return smf::write(1, tpb, std::move(tracks));
}

}  // namespace accompanion
