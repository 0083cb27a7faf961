#pragma once

// Discrete-event session loop: solo input -> follower -> tempo -> engine ->
// output sink, with telemetry hooks and a scaling control queue. Time comes
// from a Clock, so the same loop runs against a virtual or a wall clock.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "accompanion/basis_mixer.hpp"
#include "accompanion/engine.hpp"
#include "accompanion/errors.hpp"
#include "accompanion/messages.hpp"
#include "accompanion/performance_sim.hpp"
#include "accompanion/smf.hpp"
#include "accompanion/solo_tracker.hpp"

namespace accompanion {

// ---------------------------------------------------------------------------
// Clocks

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  /// Blocks until `t` (or until `stop` is raised).
  virtual void wait_until(double t, const std::atomic<bool>& stop) = 0;
  virtual bool is_virtual() const = 0;
};

namespace clock_detail {
inline void sleep_for_checked(double seconds, const std::atomic<bool>& stop) {
  using namespace std::chrono;
  const auto end = steady_clock::now() + duration_cast<steady_clock::duration>(duration<double>(seconds));
  while (!stop.load(std::memory_order_relaxed)) {
    const auto left = end - steady_clock::now();
    if (left <= steady_clock::duration::zero()) return;
    std::this_thread::sleep_for(std::min<steady_clock::duration>(left, milliseconds(20)));
  }
}
}  // namespace clock_detail

/// Jumps straight to each requested time. With a speed factor, also sleeps
/// the elapsed virtual time divided by the factor.
class VirtualClock : public Clock {
 public:
  explicit VirtualClock(std::optional<double> speedFactor = std::nullopt) : speed_(speedFactor) {}
  double now() const override { return now_; }
  void wait_until(double t, const std::atomic<bool>& stop) override {
    if (t <= now_) return;
    if (speed_) clock_detail::sleep_for_checked((t - now_) / *speed_, stop);
    now_ = t;
  }
  bool is_virtual() const override { return true; }

 private:
  std::optional<double> speed_;
  double now_ = 0.0;
};

class RealtimeClock : public Clock {
 public:
  RealtimeClock() : start_(std::chrono::steady_clock::now()) {}
  double now() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void wait_until(double t, const std::atomic<bool>& stop) override {
    const double left = t - now();
    if (left > 0) clock_detail::sleep_for_checked(left, stop);
  }
  bool is_virtual() const override { return false; }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct ClockSpec {
  bool realtime = false;
  std::optional<double> speedFactor;  // virtual only

  /// "virtual", "virtual:<factor>" or "realtime".
  static ClockSpec parse(const std::string& text) {
    if (text == "realtime") return {true, std::nullopt};
    if (text == "virtual") return {};
    const std::string prefix = "virtual:";
    if (text.rfind(prefix, 0) == 0) {
      double factor = 0.0;
      try {
        std::size_t used = 0;
        factor = std::stod(text.substr(prefix.size()), &used);
        if (used != text.size() - prefix.size()) factor = 0.0;
      } catch (const std::exception&) {
      }
      if (!(factor > 0.0) || !std::isfinite(factor))
        throw ConfigError("clock speed factor must be a positive number: '" + text + "'");
      return {false, factor};
    }
    throw ConfigError("unknown clock '" + text + "' (expected virtual[:factor] or realtime)");
  }

  std::unique_ptr<Clock> make() const {
    if (realtime) return std::make_unique<RealtimeClock>();
    return std::make_unique<VirtualClock>(speedFactor);
  }
};

// ---------------------------------------------------------------------------
// Output sinks

struct SinkEvent {
  enum class Kind { noteOn, noteOff };
  Kind kind = Kind::noteOn;
  double time = 0.0;
  int channel = 0;  // 0 solo echo, 1 accompaniment
  int pitch = 0;
  int velocity = 0;
  bool operator==(const SinkEvent&) const = default;
};

inline constexpr int kSoloChannel = 0;
inline constexpr int kAccompChannel = 1;

class OutputSink {
 public:
  virtual ~OutputSink() = default;
  virtual void send(const SinkEvent& ev) = 0;
  virtual void close() {}
};

class MemorySink : public OutputSink {
 public:
  void send(const SinkEvent& ev) override { events_.push_back(ev); }
  const std::vector<SinkEvent>& events() const { return events_; }

 private:
  std::vector<SinkEvent> events_;
};

// Capture timing: 1000 ticks per quarter at 500000 us per quarter, so one
// tick is 0.5 ms.
inline constexpr int kCaptureDivision = 1000;
inline constexpr std::uint32_t kCaptureTempo = 500000;

inline std::uint64_t seconds_to_capture_ticks(double seconds) {
  return static_cast<std::uint64_t>(std::llround(std::max(0.0, seconds) * 2000.0));
}

/// Format 1 SMF with tempo, solo echo and accompaniment tracks.
inline std::vector<std::uint8_t> capture_smf(const std::vector<SinkEvent>& events) {
  std::vector<smf::TrackData> tracks(3);
  tracks[0].events.push_back(smf::tempo_meta(0, kCaptureTempo));
  tracks[1].events.push_back(smf::track_name("solo"));
  tracks[2].events.push_back(smf::track_name("accompaniment"));
  for (const auto& ev : events) {
    auto& track = tracks[ev.channel == kSoloChannel ? 1 : 2];
    const auto tick = seconds_to_capture_ticks(ev.time);
    track.events.push_back(ev.kind == SinkEvent::Kind::noteOn
                               ? smf::note_on(tick, ev.channel, ev.pitch, ev.velocity)
                               : smf::note_off(tick, ev.channel, ev.pitch));
  }
  return smf::write(1, kCaptureDivision, std::move(tracks));
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

class CaptureSink : public OutputSink {
 public:
  explicit CaptureSink(std::filesystem::path path) : path_(std::move(path)) {}
  void send(const SinkEvent& ev) override { events_.push_back(ev); }
  void close() override {
    if (closed_) return;
    closed_ = true;
    write_file(path_, capture_smf(events_));
  }
  const std::vector<SinkEvent>& events() const { return events_; }

 private:
  std::filesystem::path path_;
  std::vector<SinkEvent> events_;
  bool closed_ = false;
};

// This build has no MIDI device backend, so every device name is unknown.
inline std::unique_ptr<OutputSink> open_device_sink(const std::string& name) {
  throw DeviceNotFound("MIDI output device '" + name + "' not found (no MIDI device support in this build)");
}

// ---------------------------------------------------------------------------
// Input

class InputSource {
 public:
  virtual ~InputSource() = default;
  /// Onset of the next available note, if one is available.
  virtual std::optional<double> next_time() = 0;
  virtual PerformedNote pop() = 0;
  /// True once no further notes will arrive.
  virtual bool finished() = 0;
};

class SimulatedInput : public InputSource {
 public:
  explicit SimulatedInput(std::vector<PerformedNote> notes) : notes_(std::move(notes)) {}
  std::optional<double> next_time() override {
    if (next_ >= notes_.size()) return std::nullopt;
    return notes_[next_].onsetSeconds;
  }
  PerformedNote pop() override { return notes_.at(next_++); }
  bool finished() override { return next_ >= notes_.size(); }

 private:
  std::vector<PerformedNote> notes_;
  std::size_t next_ = 0;
};

/// Thread-safe hand-off from an input thread. Unbounded, but logs a warning
/// each time the backlog crosses the alarm threshold.
class InputQueue : public InputSource {
 public:
  static constexpr std::size_t kAlarmThreshold = 1024;

  void push(const PerformedNote& note) {
    std::lock_guard lock(mutex_);
    queue_.push_back(note);
    if (queue_.size() > kAlarmThreshold && !alarmed_) {
      alarmed_ = true;
      ++alarms_;
      spdlog::warn("input backlog above {} events", kAlarmThreshold);
    } else if (queue_.size() <= kAlarmThreshold) {
      alarmed_ = false;
    }
  }
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  std::optional<double> next_time() override {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    return queue_.front().onsetSeconds;
  }
  PerformedNote pop() override {
    std::lock_guard lock(mutex_);
    PerformedNote n = queue_.front();
    queue_.pop_front();
    if (queue_.size() <= kAlarmThreshold) alarmed_ = false;
    return n;
  }
  bool finished() override {
    std::lock_guard lock(mutex_);
    return closed_ && queue_.empty();
  }
  std::size_t alarm_count() const {
    std::lock_guard lock(mutex_);
    return alarms_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<PerformedNote> queue_;
  bool closed_ = false;
  bool alarmed_ = false;
  std::size_t alarms_ = 0;
};

inline std::unique_ptr<InputSource> open_device_input(const std::string& name) {
  throw DeviceNotFound("MIDI input device '" + name + "' not found (no MIDI device support in this build)");
}

// ---------------------------------------------------------------------------
// Control

/// Scaling requests from any thread, applied by the session between events.
class ControlQueue {
 public:
  void push(const ScalingMsg& m) {
    std::lock_guard lock(mutex_);
    pending_.push_back(m);
  }
  std::vector<ScalingMsg> drain() {
    std::lock_guard lock(mutex_);
    return std::exchange(pending_, {});
  }

 private:
  std::mutex mutex_;
  std::vector<ScalingMsg> pending_;
};

// ---------------------------------------------------------------------------
// Loading

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(read_file_text(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return j;
}

/// {"solo_track": n, "accomp_track": m}; either key may be omitted.
inline TrackMapping track_mapping_from_json(const nlohmann::json& j) {
  TrackMapping m;
  try {
    if (j.contains("solo_track")) m.soloTrack = j.at("solo_track").get<int>();
    if (j.contains("accomp_track")) m.accompTrack = j.at("accomp_track").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("track mapping: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Session

struct SessionOptions {
  FollowerParams follower;
  TempoParams tempo;
  EngineConfig engine;
};

struct SessionStats {
  std::size_t soloEvents = 0;
  std::size_t accompNotes = 0;
  double endTime = 0.0;
  std::vector<double> latencies;  // wall seconds per solo event
};

using Broadcast = std::function<void(const WsMessage&)>;

class Session {
 public:
  Session(SoloScore solo, AccompanimentScore accomp, PieceTargets targets, Clock& clock,
          InputSource& input, OutputSink& sink, SessionOptions options = {})
      : tracker_(solo, options.follower, options.tempo),
        engine_(std::move(solo), std::move(accomp), std::move(targets), options.engine),
        clock_(clock), input_(input), sink_(sink) {}

  void set_broadcast(Broadcast b) { broadcast_ = std::move(b); }
  void set_control_queue(ControlQueue* q) { controls_ = q; }
  void set_stop_flag(const std::atomic<bool>* stop) { stop_ = stop; }

  AccompanimentEngine& engine() { return engine_; }
  const SoloTracker& tracker() const { return tracker_; }

  SessionStats run() {
    static const std::atomic<bool> never{false};
    const std::atomic<bool>& stop = stop_ ? *stop_ : never;
    SessionStats stats;
    bool inputClosed = false;

    while (!stop.load(std::memory_order_relaxed)) {
      apply_controls();
      const auto tIn = input_.next_time();
      if (!tIn && !inputClosed && input_.finished()) {
        inputClosed = true;
        engine_.finish_input();
      }
      std::optional<double> t = tIn;
      auto earliest = [&](std::optional<double> c) {
        if (c && (!t || *c < *t)) t = c;
      };
      earliest(engine_.next_due_time());
      if (!offs_.empty()) earliest(offs_.top().time);
      if (!t) {
        if (inputClosed) break;
        clock_.wait_until(clock_.now() + 0.005, stop);  // waiting on live input
        continue;
      }
      clock_.wait_until(*t, stop);
      const double now = std::max(clock_.now(), *t);

      while (!offs_.empty() && offs_.top().time <= now) {
        auto off = offs_.top();
        offs_.pop();
        sink_.send({SinkEvent::Kind::noteOff, clock_.is_virtual() ? off.time : now, off.channel, off.pitch, 0});
      }
      for (const auto& ev : engine_.pop_due(now)) {
        const double on = clock_.is_virtual() ? ev.onTimeSeconds : now;
        const double length = ev.offTimeSeconds - ev.onTimeSeconds;
        sink_.send({SinkEvent::Kind::noteOn, on, kAccompChannel, ev.pitch, ev.velocity});
        schedule_off(on + length, kAccompChannel, ev.pitch);
        ++stats.accompNotes;
        emit(AccompNoteMsg{ev.pitch, ev.velocity, on, length});
      }
      while (true) {
        const auto next = input_.next_time();
        if (!next || *next > now) break;
        PerformedNote note = input_.pop();
        if (!clock_.is_virtual()) note.onsetSeconds = now;
        handle_solo(note, stats);
      }
    }
    stats.endTime = clock_.now();
    return stats;
  }

 private:
  struct PendingOff {
    double time;
    std::uint64_t seq;
    int channel;
    int pitch;
    bool operator>(const PendingOff& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  void schedule_off(double time, int channel, int pitch) { offs_.push({time, seq_++, channel, pitch}); }

  void emit(const WsMessage& m) {
    if (broadcast_) broadcast_(m);
  }

  void apply_controls() {
    if (!controls_) return;
    for (const auto& m : controls_->drain()) {
      engine_.set_scaling(m.target, m.value);
      spdlog::debug("scaling {} = {}", to_string(m.target), engine_.state().scaling[m.target]);
    }
  }

  void handle_solo(const PerformedNote& note, SessionStats& stats) {
    const auto start = std::chrono::steady_clock::now();
    const AlignmentEvent ev = tracker_.on_note(note);
    engine_.on_solo_event(ev, tracker_.tempo());
    stats.latencies.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    ++stats.soloEvents;

    sink_.send({SinkEvent::Kind::noteOn, note.onsetSeconds, kSoloChannel, note.pitch,
                std::clamp(note.velocity, 1, 127)});
    schedule_off(note.onsetSeconds + std::max(note.durationSeconds, 1e-3), kSoloChannel, note.pitch);
    emit(SoloNoteMsg{note.pitch, note.velocity, note.onsetSeconds, ev.label});
    emit(TempoMsg{tracker_.beat_period(), tracker_.score_beat()});
  }

  SoloTracker tracker_;
  AccompanimentEngine engine_;
  Clock& clock_;
  InputSource& input_;
  OutputSink& sink_;
  Broadcast broadcast_;
  ControlQueue* controls_ = nullptr;
  const std::atomic<bool>* stop_ = nullptr;
  std::priority_queue<PendingOff, std::vector<PendingOff>, std::greater<>> offs_;
  std::uint64_t seq_ = 0;
};

/// Nearest-rank percentile.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace accompanion
