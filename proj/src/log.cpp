#include "memsel/log.hpp"

#include <cstdlib>
#include <string>

namespace memsel {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MEMSEL_LOG");
    const std::string v = env == nullptr ? "" : env;
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

}  // namespace memsel
