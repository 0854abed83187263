#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace adaptkf {

// Verbosity from ADAPTKF_LOG: quiet (default errors only), info, debug.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ADAPTKF_LOG");
    if (!env) return LogLevel::quiet;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    return LogLevel::quiet;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[adaptkf] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[adaptkf:debug] " << msg << "\n";
}

}  // namespace adaptkf
