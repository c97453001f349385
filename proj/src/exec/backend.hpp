#pragma once

#include <optional>
#include <string_view>

namespace fibra::exec {

// One async-call interface, two execution strategies behind it: Thread
// spawns an OS thread per call, Fiber enqueues a cooperative task on the
// calling worker. Selected once per pool and immutable afterwards.
enum class Backend { Thread, Fiber };

inline const char* to_string(Backend b) {
  return b == Backend::Thread ? "thread" : "fiber";
}

inline std::optional<Backend> backend_from_string(std::string_view s) {
  if (s == "thread") return Backend::Thread;
  if (s == "fiber") return Backend::Fiber;
  return std::nullopt;
}

}  // namespace fibra::exec
