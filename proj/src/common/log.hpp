#pragma once

#include <cstdio>
#include <string>

namespace fibra {

// Tiny stderr logger controlled by FIBRA_LOG=debug|info|warn|error.
enum class LogLevel : int { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level();

void log_line(LogLevel lvl, const std::string& msg);

#define FIBRA_LOGF(lvl, ...)                                  \
  do {                                                        \
    if (static_cast<int>(lvl) >= static_cast<int>(::fibra::log_level())) { \
      char buf_[512];                                         \
      std::snprintf(buf_, sizeof(buf_), __VA_ARGS__);         \
      ::fibra::log_line(lvl, buf_);                           \
    }                                                         \
  } while (0)

#define LOG_DEBUG(...) FIBRA_LOGF(::fibra::LogLevel::Debug, __VA_ARGS__)
#define LOG_INFO(...) FIBRA_LOGF(::fibra::LogLevel::Info, __VA_ARGS__)
#define LOG_WARN(...) FIBRA_LOGF(::fibra::LogLevel::Warn, __VA_ARGS__)
#define LOG_ERROR(...) FIBRA_LOGF(::fibra::LogLevel::Error, __VA_ARGS__)

}  // namespace fibra
