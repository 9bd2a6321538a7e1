#pragma once

#include <string_view>

namespace ctxsiem {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Process-wide threshold; initialised from CTXSIEM_LOG (debug|info|warn|error|off).
LogLevel log_level();
void set_log_level(LogLevel level);

/// Thread-safe line-oriented logging to stderr.
void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::Info, m); }
inline void log_warn(std::string_view m) { log(LogLevel::Warn, m); }
inline void log_error(std::string_view m) { log(LogLevel::Error, m); }

}  // namespace ctxsiem
