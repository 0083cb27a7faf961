#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "accompanion/messages.hpp"
#include "support/fixtures.hpp"

namespace accompanion {
namespace {

std::vector<WsMessage> random_messages(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (rng() >> 11) * 0x1.0p-53; };
  auto midi = [&] { return static_cast<int>(rng() % 128); };
  const AlignmentLabel labels[] = {AlignmentLabel::match, AlignmentLabel::insertion, AlignmentLabel::wrongNote};
  std::vector<WsMessage> out;
  for (int i = 0; i < count; ++i) {
    switch (rng() % 5) {
      case 0: out.push_back(SoloNoteMsg{midi(), midi(), uni(0, 600), labels[rng() % 3]}); break;
      case 1: out.push_back(AccompNoteMsg{midi(), midi(), uni(0, 600), uni(0, 4)}); break;
      case 2: out.push_back(TempoMsg{uni(0.2, 2.0), uni(-1, 400)}); break;
      case 3: {
        PieceMsg p;
        for (int k = static_cast<int>(rng() % 6); k > 0; --k) p.solo.push_back({k, midi(), uni(0, 50), uni(0, 4)});
        for (int k = static_cast<int>(rng() % 6); k > 0; --k) p.accomp.push_back({100 + k, midi(), uni(0, 50), uni(0, 4)});
        out.push_back(p);
        break;
      }
      default: out.push_back(ScalingMsg{kScalingTargets[rng() % kScalingTargets.size()], uni(0, 2)}); break;
    }
  }
  return out;
}

TEST(Messages, RoundTripIsExact) {
  for (const auto& m : random_messages(11, 2000)) {
    const auto text = serialize(m);
    const auto back = parse_message(text);
    ASSERT_TRUE(back.has_value()) << text;
    EXPECT_EQ(*back, m) << text;
    EXPECT_EQ(serialize(*back), text);
  }
}

TEST(Messages, WireFieldNames) {
  EXPECT_EQ(to_json(SoloNoteMsg{60, 80, 1.5, AlignmentLabel::match}),
            nlohmann::json::parse(R"({"type":"solo_note","pitch":60,"velocity":80,"time":1.5,"status":"match"})"));
  EXPECT_EQ(to_json(AccompNoteMsg{48, 70, 2.0, 0.25}),
            nlohmann::json::parse(R"({"type":"accomp_note","pitch":48,"velocity":70,"time":2.0,"duration":0.25})"));
  EXPECT_EQ(to_json(TempoMsg{0.5, 3.0}),
            nlohmann::json::parse(R"({"type":"tempo","beat_period":0.5,"score_beat":3.0})"));
  EXPECT_EQ(to_json(ScalingMsg{ScalingTarget::bp, 1.5}),
            nlohmann::json::parse(R"({"type":"scaling","target":"bp","value":1.5})"));
}

TEST(Messages, StatusMapping) {
  EXPECT_STREQ(wire_status(AlignmentLabel::match), "match");
  EXPECT_STREQ(wire_status(AlignmentLabel::insertion), "insert");
  EXPECT_STREQ(wire_status(AlignmentLabel::wrongNote), "miss");
  EXPECT_EQ(parse_wire_status("miss"), AlignmentLabel::wrongNote);
  EXPECT_FALSE(parse_wire_status("wrong").has_value());
}

TEST(Messages, ScalingTargetsAllNamed) {
  for (auto t : kScalingTargets) {
    const auto m = parse_message(serialize(ScalingMsg{t, 0.5}));
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(std::get<ScalingMsg>(*m).target, t);
  }
}

TEST(Messages, UnknownAndMalformedAreIgnored) {
  for (const char* text : {R"({"type":"hello"})", R"({"type":"scaling","target":"volume","value":1})",
                           R"({"type":"scaling","target":"bp"})", R"({"type":"solo_note","pitch":1,"velocity":1,"time":0,"status":"ok"})",
                           R"({"pitch":60})", R"([1,2,3])", "not json", R"({"type":7})", ""}) {
    EXPECT_FALSE(parse_message(text).has_value()) << text;
  }
}

TEST(Messages, PieceFromScore) {
  const auto solo = test::solo_from({60, 62}, {0, 1});
  const auto accomp = test::chord_accompaniment(1);
  const auto p = piece_message(solo, accomp);
  ASSERT_EQ(p.solo.size(), 2u);
  ASSERT_EQ(p.accomp.size(), 3u);
  EXPECT_EQ(p.solo[1], (PieceNote{1, 62, 1.0, 1.0}));
  EXPECT_EQ(p.accomp[0].id, 1000);
}

// Writes valid frames and deliberately invalid ones for the schema check.
TEST(Messages, WriteSchemaSamples) {
  std::ofstream valid("ws_samples_valid.jsonl");
  for (const auto& m : random_messages(3, 300)) valid << serialize(m) << '\n';
  std::ofstream invalid("ws_samples_invalid.jsonl");
  invalid << R"({"type":"hello"})" << '\n'
          << R"({"type":"scaling","target":"volume","value":1})" << '\n'
          << R"({"type":"solo_note","pitch":60,"velocity":80,"time":1,"status":"wrong"})" << '\n'
          << R"({"type":"tempo","beat_period":0.5})" << '\n';
  ASSERT_TRUE(valid.good() && invalid.good());
}

}  // namespace
}  // namespace accompanion
