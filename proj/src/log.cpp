#include "ctxsiem/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace ctxsiem {

namespace {

LogLevel from_env() {
  const char* v = std::getenv("CTXSIEM_LOG");
  if (v == nullptr) return LogLevel::Warn;
  const std::string s(v);
  if (s == "debug") return LogLevel::Debug;
  if (s == "info") return LogLevel::Info;
  if (s == "error") return LogLevel::Error;
  if (s == "off") return LogLevel::Off;
  return LogLevel::Warn;
}

std::atomic<LogLevel>& level_ref() {
  static std::atomic<LogLevel> level{from_env()};
  return level;
}

constexpr std::string_view kNames[] = {"debug", "info", "warn", "error"};

}  // namespace

LogLevel log_level() { return level_ref().load(); }
void set_log_level(LogLevel level) { level_ref().store(level); }

void log(LogLevel level, std::string_view message) {
  if (level < log_level() || level == LogLevel::Off) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[ctxsiem " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace ctxsiem
