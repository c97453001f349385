#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "common/result.hpp"
#include "exec/pool.hpp"
#include "wire/frame.hpp"
#include "wire/socket.hpp"

namespace fibra::wire {

using json = nlohmann::json;

struct ClientConfig {
  uint32_t pool_capacity = 64;  // max connections per downstream target
  uint32_t timeout_ms = 5000;   // per-call deadline
};

// One pooled connection: socket plus its receive buffer. At most one
// outstanding request per connection (no pipelining).
struct Connection {
  Socket sock;
  std::vector<uint8_t> rxbuf;
  bool reused = false;  // true once it has served at least one call
};

// Capacity-bounded pool of connections to one host:port. Checkout blocks the
// caller (parks a fiber) when all slots are busy; errored connections are
// discarded and their slot freed.
class ConnectionPool {
 public:
  ConnectionPool(std::string host, uint16_t port, ClientConfig cfg);
  ~ConnectionPool();

  Result<std::unique_ptr<Connection>> checkout(uint64_t deadline_ns);
  void give_back(std::unique_ptr<Connection> conn, bool reusable);

  const std::string& host() const { return host_; }
  uint16_t port() const { return port_; }

 private:
  struct Waiter {
    exec::detail::FiberCtx* fiber = nullptr;
    std::unique_ptr<Connection> granted;
    bool create_permit = false;
    bool satisfied = false;
  };

  std::string host_;
  uint16_t port_;
  ClientConfig cfg_;
  std::mutex mu_;
  std::condition_variable cv_;  // thread waiters
  std::vector<std::unique_ptr<Connection>> idle_;
  std::deque<Waiter*> waiters_;
  uint32_t total_ = 0;  // idle + checked out
};

// RPC client: named targets, per-target pools, calls issued through the
// active backend's async machinery. get() on the returned handle yields the
// response payload or the failure.
class RpcClient {
 public:
  RpcClient(exec::WorkerPool& pool, ClientConfig cfg);

  void add_target(const std::string& name, const std::string& host, uint16_t port);
  bool has_target(const std::string& name) const;

  exec::Future<json> call(const std::string& target, const std::string& method, json payload);
  Result<json> call_sync(const std::string& target, const std::string& method, json payload);

  exec::WorkerPool& pool() { return pool_; }
  const ClientConfig& config() const { return cfg_; }

 private:
  Result<json> exchange(ConnectionPool& target_pool, const std::string& method,
                        const std::string& payload_text);
  Result<json> exchange_once(Connection& conn, uint64_t request_id,
                             const std::string& method, const std::string& payload_text,
                             uint64_t deadline_ns);

  exec::WorkerPool& pool_;
  ClientConfig cfg_;
  std::map<std::string, std::unique_ptr<ConnectionPool>> targets_;
  std::atomic<uint64_t> next_id_{1};
};

}  // namespace fibra::wire
