#pragma once

#include <stdexcept>
#include <string>

namespace accompanion {

/// Process exit status of the command-line tool.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  io = 3,
  format = 4,
  deviceNotFound = 5,
  portBusy = 6,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DeviceNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PortBusy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace accompanion
