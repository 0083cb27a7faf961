#pragma once

// JSON messages exchanged with UI clients, one object per WebSocket frame.

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "accompanion/engine.hpp"
#include "accompanion/score.hpp"
#include "accompanion/score_follower.hpp"

namespace accompanion {

/// Wire spelling of an alignment label: match, insert, miss.
inline const char* wire_status(AlignmentLabel label) {
  switch (label) {
    case AlignmentLabel::match: return "match";
    case AlignmentLabel::insertion: return "insert";
    case AlignmentLabel::wrongNote: return "miss";
  }
  return "miss";
}

inline std::optional<AlignmentLabel> parse_wire_status(std::string_view s) {
  if (s == "match") return AlignmentLabel::match;
  if (s == "insert") return AlignmentLabel::insertion;
  if (s == "miss") return AlignmentLabel::wrongNote;
  return std::nullopt;
}

struct SoloNoteMsg {
  int pitch = 0;
  int velocity = 0;
  double time = 0.0;
  AlignmentLabel status = AlignmentLabel::match;
  bool operator==(const SoloNoteMsg&) const = default;
};

struct AccompNoteMsg {
  int pitch = 0;
  int velocity = 0;
  double time = 0.0;
  double duration = 0.0;
  bool operator==(const AccompNoteMsg&) const = default;
};

struct TempoMsg {
  double beatPeriod = 0.5;
  double scoreBeat = 0.0;
  bool operator==(const TempoMsg&) const = default;
};

struct PieceNote {
  int id = 0;
  int pitch = 0;
  double onset = 0.0;     // beats
  double duration = 0.0;  // beats
  bool operator==(const PieceNote&) const = default;
};

struct PieceMsg {
  std::vector<PieceNote> solo;
  std::vector<PieceNote> accomp;
  bool operator==(const PieceMsg&) const = default;
};

struct ScalingMsg {
  ScalingTarget target = ScalingTarget::bp;
  double value = 1.0;
  bool operator==(const ScalingMsg&) const = default;
};

using WsMessage = std::variant<SoloNoteMsg, AccompNoteMsg, TempoMsg, PieceMsg, ScalingMsg>;

inline PieceMsg piece_message(const SoloScore& solo, const AccompanimentScore& accomp) {
  PieceMsg m;
  for (const auto& n : solo.notes) m.solo.push_back({n.id, n.pitch, n.onset, n.duration});
  for (const auto& n : accomp.notes) m.accomp.push_back({n.id, n.pitch, n.onset, n.duration});
  return m;
}

namespace msg_detail {

inline nlohmann::json notes_json(const std::vector<PieceNote>& notes) {
  auto arr = nlohmann::json::array();
  for (const auto& n : notes)
    arr.push_back({{"id", n.id}, {"pitch", n.pitch}, {"onset", n.onset}, {"duration", n.duration}});
  return arr;
}

inline std::vector<PieceNote> notes_from(const nlohmann::json& arr) {
  std::vector<PieceNote> out;
  for (const auto& n : arr)
    out.push_back({n.at("id").get<int>(), n.at("pitch").get<int>(), n.at("onset").get<double>(),
                   n.at("duration").get<double>()});
  return out;
}

struct ToJson {
  nlohmann::json operator()(const SoloNoteMsg& m) const {
    return {{"type", "solo_note"}, {"pitch", m.pitch}, {"velocity", m.velocity}, {"time", m.time},
            {"status", wire_status(m.status)}};
  }
  nlohmann::json operator()(const AccompNoteMsg& m) const {
    return {{"type", "accomp_note"}, {"pitch", m.pitch},  {"velocity", m.velocity},
            {"time", m.time},        {"duration", m.duration}};
  }
  nlohmann::json operator()(const TempoMsg& m) const {
    return {{"type", "tempo"}, {"beat_period", m.beatPeriod}, {"score_beat", m.scoreBeat}};
  }
  nlohmann::json operator()(const PieceMsg& m) const {
    return {{"type", "piece"}, {"solo", notes_json(m.solo)}, {"accomp", notes_json(m.accomp)}};
  }
  nlohmann::json operator()(const ScalingMsg& m) const {
    return {{"type", "scaling"}, {"target", to_string(m.target)}, {"value", m.value}};
  }
};

}  // namespace msg_detail

inline nlohmann::json to_json(const WsMessage& m) { return std::visit(msg_detail::ToJson{}, m); }

inline std::string serialize(const WsMessage& m) { return to_json(m).dump(); }

/// Parses one frame. Unknown types and malformed frames are logged and
/// yield nullopt.
inline std::optional<WsMessage> parse_message(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    spdlog::warn("ignoring malformed message: {}", text.substr(0, 120));
    return std::nullopt;
  }
  const auto type = j["type"].get<std::string>();
  try {
    if (type == "solo_note") {
      auto status = parse_wire_status(j.at("status").get<std::string>());
      if (!status) throw std::invalid_argument("bad status");
      return SoloNoteMsg{j.at("pitch").get<int>(), j.at("velocity").get<int>(),
                         j.at("time").get<double>(), *status};
    }
    if (type == "accomp_note")
      return AccompNoteMsg{j.at("pitch").get<int>(), j.at("velocity").get<int>(),
                           j.at("time").get<double>(), j.at("duration").get<double>()};
    if (type == "tempo") return TempoMsg{j.at("beat_period").get<double>(), j.at("score_beat").get<double>()};
    if (type == "piece") return PieceMsg{msg_detail::notes_from(j.at("solo")), msg_detail::notes_from(j.at("accomp"))};
    if (type == "scaling") {
      auto target = parse_scaling_target(j.at("target").get<std::string>());
      if (!target) throw std::invalid_argument("unknown scaling target");
      return ScalingMsg{*target, j.at("value").get<double>()};
    }
  } catch (const std::exception& e) {
    spdlog::warn("ignoring malformed '{}' message: {}", type, e.what());
    return std::nullopt;
  }
  spdlog::warn("ignoring unknown message type '{}'", type);
  return std::nullopt;
}

}  // namespace accompanion
