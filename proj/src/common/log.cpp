#include "common/log.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>

namespace fibra {

static LogLevel parse_level() {
  const char* env = std::getenv("FIBRA_LOG");
  if (env == nullptr) return LogLevel::Warn;
  if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
  if (std::strcmp(env, "info") == 0) return LogLevel::Info;
  if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
  if (std::strcmp(env, "error") == 0) return LogLevel::Error;
  return LogLevel::Warn;
}

LogLevel log_level() {
  static const LogLevel lvl = parse_level();
  return lvl;
}

void log_line(LogLevel lvl, const std::string& msg) {
  static const char* names[] = {"DEBUG", "INFO", "WARN", "ERROR"};
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::fprintf(stderr, "[fibra %s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

}  // namespace fibra
