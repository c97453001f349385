#pragma once

#include <memory>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "exec/pool.hpp"
#include "wire/client.hpp"
#include "wire/server.hpp"

namespace fibra::test {

// One service endpoint on an ephemeral port with its own pool.
struct TestServer {
  exec::WorkerPool pool;
  wire::RpcServer server;

  TestServer(exec::Backend backend, unsigned workers)
      : pool(backend, workers), server(pool, "127.0.0.1", 0) {}

  ~TestServer() {
    server.stop();
    pool.shutdown();
  }

  void add(const std::string& name, wire::Handler h) {
    auto r = server.register_method(name, std::move(h));
    if (!r.ok()) throw std::runtime_error(r.error().msg);
  }

  void start() {
    auto r = server.start();
    if (!r.ok()) throw std::runtime_error(r.error().msg);
  }

  uint16_t port() const { return server.port(); }
};

// Raw scripted connection for byte-level protocol assertions.
struct RawConn {
  wire::Socket sock;

  static RawConn connect(uint16_t port) {
    auto s = wire::Socket::connect_tcp("127.0.0.1", port, mono_ns() + 2 * kNsPerSec);
    if (!s.ok()) throw std::runtime_error(s.error().msg);
    return RawConn{std::move(s).value()};
  }

  void send(const std::vector<uint8_t>& bytes) {
    auto r = sock.send_all(bytes.data(), bytes.size(), mono_ns() + 2 * kNsPerSec);
    if (!r.ok()) throw std::runtime_error(r.error().msg);
  }

  // Reads until the deadline, the byte budget, or peer close.
  std::vector<uint8_t> read_available(size_t max_bytes, uint64_t budget_ns) {
    std::vector<uint8_t> out;
    const uint64_t deadline = mono_ns() + budget_ns;
    uint8_t chunk[4096];
    while (out.size() < max_bytes) {
      auto n = sock.recv_some(chunk, sizeof(chunk), deadline);
      if (!n.ok() || n.value() == 0) break;
      out.insert(out.end(), chunk, chunk + n.value());
    }
    return out;
  }
};

}  // namespace fibra::test
