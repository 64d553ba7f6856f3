#pragma once

#include <string>

namespace s2a {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Read once from S2A_LOG_LEVEL (error, warn, info, debug); default warn.
LogLevel log_level();

/// One line to stderr, prefixed with the level.
void log(LogLevel level, const std::string& message);
inline void log_warn(const std::string& m) { log(LogLevel::kWarn, m); }
inline void log_info(const std::string& m) { log(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log(LogLevel::kDebug, m); }

}  // namespace s2a
