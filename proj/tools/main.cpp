#include <atomic>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "accompanion/app.hpp"

namespace {

using namespace accompanion;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected failure\n"
    "  2  usage or configuration error\n"
    "  3  file I/O error\n"
    "  4  malformed MIDI or weights file\n"
    "  5  MIDI device not found\n"
    "  6  WebSocket port busy\n"
    "\nSet ACCOMP_LOG=trace|debug|info|warn|error|off to choose the log level.";

struct Common {
  std::string score;
  std::string simConfig;
  std::string trackConfig;
  std::optional<std::uint64_t> seed;

  void add_score(CLI::App* cmd) {
    cmd->add_option("--score", score, "Score as a Standard MIDI File")->required();
    cmd->add_option("--config", trackConfig, "JSON with solo_track / accomp_track indices");
  }
  void add_sim(CLI::App* cmd) {
    cmd->add_option("--sim-config", simConfig, "Simulated soloist configuration (JSON)");
    cmd->add_option("--seed", seed, "Overrides the simulation seed");
  }
  TrackMapping mapping() const {
    return trackConfig.empty() ? TrackMapping{} : track_mapping_from_json(read_json_file(trackConfig));
  }
  SimConfig sim() const {
    SimConfig c = simConfig.empty() ? SimConfig{} : load_sim_config(simConfig);
    if (seed) c.seed = *seed;
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write '" + path + "'");
}

int run_play(const Common& common, const std::string& weights, const std::string& input,
             const std::string& output, std::optional<int> wsPort, const std::string& clock, bool timing) {
  SessionConfig cfg;
  cfg.scorePath = common.score;
  if (!weights.empty()) cfg.weightsPath = weights;
  cfg.input = InputSpec::parse(input);
  cfg.output = OutputSpec::parse(output);
  cfg.wsPort = wsPort;
  cfg.clock = ClockSpec::parse(clock);
  cfg.mapping = common.mapping();
  cfg.sim = common.sim();
  auto result = run_session(cfg, &g_stop);
  nlohmann::json summary = {{"solo_events", result.stats.soloEvents},
                            {"accomp_notes", result.stats.accompNotes},
                            {"end_time", result.stats.endTime}};
  if (timing) {
    summary["latency_p95_ms"] = 1e3 * percentile(result.stats.latencies, 0.95);
    summary["latency_max_ms"] = 1e3 * percentile(result.stats.latencies, 1.0);
  }
  std::cout << summary.dump(2) << '\n';
  return g_stop.load() ? 130 : 0;
}

int run_simulate(const Common& common, const std::string& out, const std::string& truthPath) {
  const auto score = load_score(common.score, common.mapping());
  const auto perf = simulate(score.solo, common.sim());
  std::vector<SinkEvent> events;
  for (const auto& n : perf.notes) {
    events.push_back({SinkEvent::Kind::noteOn, n.onsetSeconds, kSoloChannel, n.pitch, n.velocity});
    events.push_back({SinkEvent::Kind::noteOff, n.onsetSeconds + n.durationSeconds, kSoloChannel, n.pitch, 0});
  }
  write_file(out, capture_smf(events));

  std::size_t wrong = 0, inserted = 0;
  nlohmann::json truth = nlohmann::json::array();
  for (std::size_t i = 0; i < perf.notes.size(); ++i) {
    const auto& t = perf.truth[i];
    wrong += t.kind == TruthKind::wrongPitch;
    inserted += t.kind == TruthKind::inserted;
    const char* kind = t.kind == TruthKind::clean ? "clean" : t.kind == TruthKind::wrongPitch ? "wrong_pitch" : "inserted";
    truth.push_back({{"pitch", perf.notes[i].pitch},
                     {"onset", perf.notes[i].onsetSeconds},
                     {"kind", kind},
                     {"score_index", t.scoreIndex ? nlohmann::json(*t.scoreIndex) : nlohmann::json(nullptr)}});
  }
  if (!truthPath.empty()) write_text(truthPath, truth.dump(1) + "\n");
  nlohmann::json summary = {{"notes", perf.notes.size()},
                            {"inserted", inserted},
                            {"wrong_pitch", wrong},
                            {"skipped", perf.skipped.size()}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_evaluate(const Common& common, const std::string& out, bool timing, bool table) {
  const auto score = load_score(common.score, common.mapping());
  const auto report = evaluate(score.solo, common.sim());
  if (table) {
    std::string text = fmt::format(
        "{:<22}{:>12}\n{:<22}{:>12}\n{:<22}{:>12.4f}\n{:<22}{:>12.4f}\n{:<22}{:>11.3f}%\n", "metric", "value",
        "events", report.eventCount, "match rate", report.matchRate, "position rate", report.positionRate,
        "mean tempo error", 100.0 * report.meanAbsTempoError);
    if (timing) text += fmt::format("{:<22}{:>10.3f}ms\n", "max latency", 1e3 * report.maxLatency);
    write_text(out, text);
  } else {
    write_text(out, to_json(report, timing).dump(2) + "\n");
  }
  return 0;
}

int run_init_weights(std::uint64_t seed, const std::string& out, int hidden, int hidden1, int hidden2) {
  if (hidden < 1 || hidden1 < 1 || hidden2 < 1) throw ConfigError("hidden sizes must be positive");
  write_text(out, save_weights(random_init(seed, hidden, hidden1, hidden2)) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"Automatic accompaniment: score following, tempo tracking and expressive rendering"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  Common common;

  auto* play = app.add_subcommand("play", "Run a live or simulated accompaniment session");
  std::string weights, input = "sim", output = "mem", clock = "virtual";
  std::optional<int> wsPort;
  bool playTiming = false;
  common.add_score(play);
  common.add_sim(play);
  play->add_option("--weights", weights, "Expressive model weights (JSON); neutral if omitted");
  play->add_option("--input", input, "sim | device:<name>")->capture_default_str();
  play->add_option("--output", output, "mem | file:<path> | device:<name>")->capture_default_str();
  play->add_option("--ws-port", wsPort, "Serve UI telemetry and controls on this port (1024-65535)");
  play->add_option("--clock", clock, "virtual[:speed-factor] | realtime")->capture_default_str();
  play->add_flag("--timing", playTiming, "Include per-event latency in the summary");

  auto* sim = app.add_subcommand("simulate", "Render a synthetic solo performance to a MIDI file");
  std::string simOut, truthOut;
  common.add_score(sim);
  common.add_sim(sim);
  sim->add_option("-o,--out", simOut, "Output MIDI file")->required();
  sim->add_option("--truth", truthOut, "Write the ground-truth alignment (JSON) here");

  auto* eval = app.add_subcommand("evaluate", "Score the follower and tempo tracker on a simulated soloist");
  std::string evalOut;
  bool evalTiming = false, evalTable = false;
  common.add_score(eval);
  common.add_sim(eval);
  eval->add_option("-o,--out", evalOut, "Write the report here instead of stdout");
  eval->add_flag("--timing", evalTiming, "Include wall-clock latency (not reproducible)");
  eval->add_flag("--table", evalTable, "Human-readable table instead of JSON");

  auto* init = app.add_subcommand("init-weights", "Write random model weights");
  std::uint64_t initSeed = 0;
  std::string initOut;
  int hidden = 16, hidden1 = 16, hidden2 = 16;
  init->add_option("--seed", initSeed, "Random seed")->capture_default_str();
  init->add_option("-o,--out", initOut, "Output JSON file")->required();
  init->add_option("--hidden", hidden, "Onsetwise hidden size")->capture_default_str();
  init->add_option("--hidden1", hidden1, "Notewise first hidden size")->capture_default_str();
  init->add_option("--hidden2", hidden2, "Notewise second hidden size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (*play) return run_play(common, weights, input, output, wsPort, clock, playTiming);
    if (*sim) return run_simulate(common, simOut, truthOut);
    if (*eval) return run_evaluate(common, evalOut, evalTiming, evalTable);
    if (*init) return run_init_weights(initSeed, initOut, hidden, hidden1, hidden2);
  } catch (...) {
    return static_cast<int>(report_current_exception());
  }
  return static_cast<int>(ExitCode::failure);
}
