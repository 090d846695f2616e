#include "ksp/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace ksp {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("KSP_LOG");
    if (env == nullptr) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    return LogLevel::info;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::error ? "error"
                    : level == LogLevel::info ? "info"
                                              : "debug";
  std::fprintf(stderr, "[kspipe %s] %s\n", tag, msg.c_str());
}

}  // namespace ksp
