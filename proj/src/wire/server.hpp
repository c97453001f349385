#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "common/result.hpp"
#include "exec/pool.hpp"
#include "wire/frame.hpp"
#include "wire/socket.hpp"

namespace fibra::wire {

using json = nlohmann::json;

using Handler = std::function<Result<json>(const json&)>;

// Framed RPC server. Accepts connections, reads request frames, dispatches
// each request to its handler on the worker pool, writes the response.
// Unknown methods get BAD_REQUEST, handler errors APP_ERROR. A protocol
// error closes only the offending connection. `__stats` is auto-registered.
class RpcServer {
 public:
  RpcServer(exec::WorkerPool& pool, std::string host, uint16_t port);
  ~RpcServer();

  // Fails on a reserved or duplicate name; must precede start().
  Result<Unit> register_method(const std::string& name, Handler handler);

  Result<Unit> start();
  void stop();

  uint16_t port() const { return bound_port_; }
  uint64_t requests() const { return requests_.load(std::memory_order_relaxed); }
  json stats_json() const;

 private:
  void accept_loop();
  void run_accept_loop();
  void serve_connection(Socket sock);
  ResponseFrame handle_request(const RequestFrame& req);
  bool track_conn(int fd);
  void untrack_conn(int fd);

  exec::WorkerPool& pool_;
  std::string host_;
  uint16_t requested_port_;
  uint16_t bound_port_ = 0;
  Socket listener_;
  std::map<std::string, Handler> methods_;
  std::atomic<uint64_t> requests_{0};
  uint64_t started_at_ns_ = 0;
  std::atomic<bool> stopping_{false};
  bool started_ = false;

  std::thread accept_thread_;  // Thread backend only
  std::mutex conn_mu_;
  std::condition_variable conn_cv_;
  std::set<int> conn_fds_;
  uint64_t live_conns_ = 0;
  bool acceptor_done_ = false;
};

}  // namespace fibra::wire
