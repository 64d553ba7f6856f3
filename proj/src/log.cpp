#include "s2a/log.h"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace s2a {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("S2A_LOG_LEVEL");
    const std::string_view v = env ? env : "";
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log(LogLevel level, const std::string& message) {
  if (level > log_level()) return;
  static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
  std::cerr << "[s2a " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace s2a
