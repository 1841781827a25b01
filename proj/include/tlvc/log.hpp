#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

namespace tlvc::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline Level parse_level(std::string_view s) {
  if (s == "debug") return Level::kDebug;
  if (s == "info") return Level::kInfo;
  if (s == "warn") return Level::kWarn;
  if (s == "error") return Level::kError;
  if (s == "off") return Level::kOff;
  return Level::kWarn;
}

// Threshold read once from TLVC_LOG; defaults to warn.
inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("TLVC_LOG");
    return env ? parse_level(env) : Level::kWarn;
  }();
  return level;
}

inline bool enabled(Level l) { return l >= threshold(); }

template <typename... Args>
void write(Level l, const Args&... args) {
  if (!enabled(l)) return;
  static constexpr const char* kTags[] = {"debug", "info", "warn", "error"};
  std::ostringstream os;
  os << "[tlvc " << kTags[static_cast<int>(l)] << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

template <typename... Args>
void debug(const Args&... args) { write(Level::kDebug, args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::kInfo, args...); }
template <typename... Args>
void warn(const Args&... args) { write(Level::kWarn, args...); }

}  // namespace tlvc::log
