#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace memsel {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Reads MEMSEL_LOG (error|warn|info|debug) once; defaults to warn.
LogLevel log_level();

template <class... Args>
void log(LogLevel level, const Args&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr std::string_view kTags[] = {"error", "warn", "info", "debug"};
  std::ostringstream os;
  os << "[memsel " << kTags[static_cast<int>(level)] << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

}  // namespace memsel
