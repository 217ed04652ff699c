#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

#include "mddnet/core.hpp"

namespace mddnet::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::Warn};
  return level;
}

inline void set_level(Level l) { threshold().store(l); }

inline Level parse_level(const std::string& s) {
  if (s == "debug") return Level::Debug;
  if (s == "info") return Level::Info;
  if (s == "warn") return Level::Warn;
  if (s == "error") return Level::Error;
  if (s == "off") return Level::Off;
  throw Error(ErrorCode::InvalidConfig, "log level must be debug/info/warn/error/off, got '" + s + "'");
}

inline bool enabled(Level l) { return l >= threshold().load(); }

template <typename... Args>
void write(Level l, const Args&... args) {
  if (!enabled(l)) return;
  static std::mutex mu;
  std::ostringstream os;
  static constexpr const char* tags[] = {"debug", "info", "warn", "error"};
  os << '[' << tags[static_cast<int>(l)] << "] ";
  (os << ... << args);
  std::lock_guard lock(mu);
  std::cerr << os.str() << '\n';
}

template <typename... Args>
void debug(const Args&... a) { write(Level::Debug, a...); }
template <typename... Args>
void info(const Args&... a) { write(Level::Info, a...); }
template <typename... Args>
void warn(const Args&... a) { write(Level::Warn, a...); }

}  // namespace mddnet::log
