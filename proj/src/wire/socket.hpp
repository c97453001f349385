#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "common/result.hpp"
#include "exec/scheduler.hpp"

namespace fibra::wire {

// Nonblocking TCP socket with deadline-driven waits. On a fiber, a stalled
// operation parks the task against the worker's reactor; on a plain thread
// it blocks in poll(). The same code path serves both backends.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd);
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  // deadline_ns is an absolute monotonic deadline; 0 means no deadline.
  static Result<Socket> connect_tcp(const std::string& host, uint16_t port,
                                    uint64_t deadline_ns);
  static Result<Socket> listen_tcp(const std::string& host, uint16_t port, int backlog);

  Result<Socket> accept_conn(uint64_t deadline_ns);

  // Reads at least one byte (0 = orderly peer close).
  Result<size_t> recv_some(uint8_t* buf, size_t len, uint64_t deadline_ns);
  Result<Unit> send_all(const uint8_t* buf, size_t len, uint64_t deadline_ns);

  void shutdown_rdwr();
  void close();
  // Drops the epoll registration; required before handing the fd to another
  // owner or parking it idle in a pool.
  void unregister_io();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  uint16_t local_port() const;

 private:
  Result<Unit> wait_io(uint32_t events, uint64_t deadline_ns);

  int fd_ = -1;
  std::unique_ptr<exec::detail::IoGate> gate_;
};

}  // namespace fibra::wire
