#pragma once

// Builds a session from files and command-line style specs, and maps
// failures to exit codes.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "accompanion/errors.hpp"
#include "accompanion/session.hpp"
#include "accompanion/ws_server.hpp"

namespace accompanion {

/// Sends logs to stderr at the level named by ACCOMP_LOG (default warn).
inline void configure_logging() {
  auto logger = spdlog::stderr_color_mt("accompanion");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("ACCOMP_LOG")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off
    if (level == spdlog::level::off && std::string(env) != "off") {
      level = spdlog::level::warn;
      spdlog::warn("unknown ACCOMP_LOG level '{}', using warn", env);
    }
  }
  spdlog::set_level(level);
}

struct InputSpec {
  std::optional<std::string> device;  // empty: simulation

  /// "sim" or "device:<name>".
  static InputSpec parse(const std::string& text) {
    if (text == "sim") return {};
    if (text.rfind("device:", 0) == 0 && text.size() > 7) return {text.substr(7)};
    throw ConfigError("bad --input '" + text + "' (expected sim or device:<name>)");
  }
};

struct OutputSpec {
  enum class Kind { memory, file, device };
  Kind kind = Kind::memory;
  std::string target;

  /// "mem", "file:<path>" or "device:<name>".
  static OutputSpec parse(const std::string& text) {
    if (text == "mem") return {};
    if (text.rfind("file:", 0) == 0 && text.size() > 5) return {Kind::file, text.substr(5)};
    if (text.rfind("device:", 0) == 0 && text.size() > 7) return {Kind::device, text.substr(7)};
    throw ConfigError("bad --output '" + text + "' (expected mem, file:<path> or device:<name>)");
  }
};

struct SessionConfig {
  std::filesystem::path scorePath;
  std::optional<std::filesystem::path> weightsPath;  // none: neutral model
  InputSpec input;
  SimConfig sim;
  OutputSpec output;
  std::optional<int> wsPort;
  ClockSpec clock;
  TrackMapping mapping;
  SessionOptions options;

  void validate() const {
    if (wsPort && (*wsPort < 1024 || *wsPort > 65535))
      throw ConfigError("--ws-port must be within 1024-65535, got " + std::to_string(*wsPort));
    if (clock.speedFactor && !(*clock.speedFactor > 0.0)) throw ConfigError("clock speed factor must be positive");
    sim.validate();
  }
};

struct SessionResult {
  SessionStats stats;
  std::vector<SinkEvent> captured;
};

inline ParsedScore load_score(const std::filesystem::path& path, const TrackMapping& mapping) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_smf(bytes, mapping);
  } catch (const SmfError& e) {
    throw SmfError(path.string() + ": " + e.what());
  }
}

inline ModelWeights load_weights_file(const std::filesystem::path& path) {
  try {
    return load_weights(read_file_text(path));
  } catch (const WeightsError& e) {
    throw WeightsError(path.string() + ": " + e.what());
  }
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
  try {
    return sim_config_from_json(read_json_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline SessionResult run_session(const SessionConfig& cfg, const std::atomic<bool>* stop = nullptr) {
  cfg.validate();
  const ParsedScore score = load_score(cfg.scorePath, cfg.mapping);
  if (score.solo.empty()) throw SmfError(cfg.scorePath.string() + ": no solo notes");
  const ModelWeights weights = cfg.weightsPath ? load_weights_file(*cfg.weightsPath) : ModelWeights::zeros();
  PieceTargets targets = predict_piece(weights, score.accomp);

  std::unique_ptr<InputSource> input;
  if (cfg.input.device) input = open_device_input(*cfg.input.device);
  else input = std::make_unique<SimulatedInput>(simulate(score.solo, cfg.sim).notes);

  std::unique_ptr<OutputSink> sink;
  MemorySink* memory = nullptr;
  CaptureSink* capture = nullptr;
  switch (cfg.output.kind) {
    case OutputSpec::Kind::memory: {
      auto m = std::make_unique<MemorySink>();
      memory = m.get();
      sink = std::move(m);
      break;
    }
    case OutputSpec::Kind::file: {
      auto c = std::make_unique<CaptureSink>(cfg.output.target);
      capture = c.get();
      sink = std::move(c);
      break;
    }
    case OutputSpec::Kind::device: sink = open_device_sink(cfg.output.target); break;
  }

  ControlQueue controls;
  std::unique_ptr<WsServer> server;
  if (cfg.wsPort) {
    WsServer::Options o;
    o.address = "0.0.0.0";
    o.port = static_cast<unsigned short>(*cfg.wsPort);
    server = std::make_unique<WsServer>(o, serialize(piece_message(score.solo, score.accomp)),
                                        [&controls](const ScalingMsg& m) { controls.push(m); });
  }

  auto clock = cfg.clock.make();
  Session session(score.solo, score.accomp, std::move(targets), *clock, *input, *sink, cfg.options);
  session.set_control_queue(&controls);
  session.set_stop_flag(stop);
  if (server) session.set_broadcast([&server](const WsMessage& m) { server->broadcast(m); });

  SessionResult result;
  result.stats = session.run();
  sink->close();
  if (server) {
    server->flush(std::chrono::milliseconds(500));
    server->stop();
  }
  if (memory) result.captured = memory->events();
  if (capture) result.captured = capture->events();
  return result;
}

namespace app_detail {
inline ExitCode fail(const std::exception& e, ExitCode code) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}
}  // namespace app_detail

/// Prints the active exception to stderr and returns its exit code. Call
/// from a catch block.
inline ExitCode report_current_exception() {
  using app_detail::fail;
  try {
    throw;
  } catch (const IoError& e) {
    return fail(e, ExitCode::io);
  } catch (const SmfError& e) {
    return fail(e, ExitCode::format);
  } catch (const WeightsError& e) {
    return fail(e, ExitCode::format);
  } catch (const DeviceNotFound& e) {
    return fail(e, ExitCode::deviceNotFound);
  } catch (const PortBusy& e) {
    return fail(e, ExitCode::portBusy);
  } catch (const ConfigError& e) {
    return fail(e, ExitCode::usage);
  } catch (const std::exception& e) {
    return fail(e, ExitCode::failure);
  }
}

}  // namespace accompanion
