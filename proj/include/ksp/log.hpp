#pragma once

#include <string>

namespace ksp {

// Verbosity is taken from the KSP_LOG environment variable
// (error | info | debug); messages go to standard error.
enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_message(LogLevel::error, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace ksp
