#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>

namespace fibra {

// Error classes double as the outcome taxonomy of the load harness:
// App errors come back from a handler, Timeout/Transport from the wire,
// Usage from misusing a handle.
enum class ErrorClass : uint8_t { App, Timeout, Transport, Usage };

inline const char* to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::App: return "app";
    case ErrorClass::Timeout: return "timeout";
    case ErrorClass::Transport: return "transport";
    case ErrorClass::Usage: return "usage";
  }
  return "?";
}

struct Error {
  ErrorClass cls = ErrorClass::App;
  std::string msg;

  static Error app(std::string m) { return {ErrorClass::App, std::move(m)}; }
  static Error timeout(std::string m = "timeout") { return {ErrorClass::Timeout, std::move(m)}; }
  static Error transport(std::string m) { return {ErrorClass::Transport, std::move(m)}; }
  static Error usage(std::string m) { return {ErrorClass::Usage, std::move(m)}; }
};

// Minimal expected-like carrier. Handlers and RPC exchanges return these;
// exceptions are confined to task wrappers.
template <class T>
class Result {
 public:
  Result(T v) : v_(std::in_place_index<0>, std::move(v)) {}  // NOLINT(google-explicit-constructor)
  Result(Error e) : v_(std::in_place_index<1>, std::move(e)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(v_); }
  const T& value() const& { return std::get<0>(v_); }
  T&& value() && { return std::get<0>(std::move(v_)); }

  const Error& error() const { return std::get<1>(v_); }
  Error&& take_error() { return std::get<1>(std::move(v_)); }

 private:
  std::variant<T, Error> v_;
};

struct Unit {};

inline Result<Unit> ok_unit() { return Result<Unit>(Unit{}); }

}  // namespace fibra
