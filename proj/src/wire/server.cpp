#include "wire/server.hpp"

#include <sys/socket.h>

#include <chrono>

#include "common/clock.hpp"
#include "common/log.hpp"

namespace fibra::wire {

namespace {
constexpr uint64_t kAcceptTickNs = 100 * kNsPerMs;
constexpr uint64_t kWriteBudgetNs = 5 * kNsPerSec;
constexpr size_t kRecvChunk = 4096;
constexpr const char* kStatsMethod = "__stats";

json error_body(const std::string& msg) { return json{{"error", msg}}; }
}  // namespace

RpcServer::RpcServer(exec::WorkerPool& pool, std::string host, uint16_t port)
    : pool_(pool), host_(std::move(host)), requested_port_(port) {}

RpcServer::~RpcServer() { stop(); }

Result<Unit> RpcServer::register_method(const std::string& name, Handler handler) {
  if (name == kStatsMethod) return Error::usage("method name __stats is reserved");
  if (started_) return Error::usage("register before start");
  if (!methods_.emplace(name, std::move(handler)).second) {
    return Error::usage("duplicate method: " + name);
  }
  return Unit{};
}

json RpcServer::stats_json() const {
  const auto s = pool_.stats();
  return json{{"requests", requests_.load(std::memory_order_relaxed)},
              {"os_spawned", s.os_spawned},
              {"coop_spawned", s.coop_spawned},
              {"inflight", s.inflight},
              {"uptime_ms", (mono_ns() - started_at_ns_) / kNsPerMs}};
}

Result<Unit> RpcServer::start() {
  auto listener = Socket::listen_tcp(host_, requested_port_, 256);
  if (!listener.ok()) return listener.take_error();
  listener_ = std::move(listener).value();
  bound_port_ = listener_.local_port();
  started_at_ns_ = mono_ns();
  started_ = true;
  if (pool_.backend() == exec::Backend::Thread) {
    accept_thread_ = std::thread([this] { accept_loop(); });
  } else {
    pool_.submit([this] { accept_loop(); });
  }
  return Unit{};
}

void RpcServer::stop() {
  if (!started_ || stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) {
    accept_thread_.join();
  } else {
    // Fiber acceptor exits on its next tick; the listener must stay open
    // until then so the fd cannot be reused under it.
    std::unique_lock lk(conn_mu_);
    conn_cv_.wait(lk, [this] { return acceptor_done_; });
  }
  {
    // Kick parked/blocked readers; their loops exit on the dead socket.
    std::lock_guard lk(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  std::unique_lock lk(conn_mu_);
  conn_cv_.wait_for(lk, std::chrono::seconds(5), [this] { return live_conns_ == 0; });
  if (live_conns_ != 0) {
    LOG_WARN("server stopping with %llu connections still live",
             static_cast<unsigned long long>(live_conns_));
  }
  listener_.close();
}

bool RpcServer::track_conn(int fd) {
  std::lock_guard lk(conn_mu_);
  if (stopping_.load(std::memory_order_acquire)) return false;
  conn_fds_.insert(fd);
  live_conns_++;
  return true;
}

void RpcServer::untrack_conn(int fd) {
  std::lock_guard lk(conn_mu_);
  conn_fds_.erase(fd);
  live_conns_--;
  conn_cv_.notify_all();
}

void RpcServer::accept_loop() {
  run_accept_loop();
  std::lock_guard lk(conn_mu_);
  acceptor_done_ = true;
  conn_cv_.notify_all();
}

void RpcServer::run_accept_loop() {
  while (!stopping_.load(std::memory_order_acquire)) {
    auto accepted = listener_.accept_conn(mono_ns() + kAcceptTickNs);
    if (!accepted.ok()) {
      if (accepted.error().cls == ErrorClass::Timeout) continue;  // stop-flag tick
      if (!stopping_.load(std::memory_order_acquire)) {
        LOG_DEBUG("accept failed: %s", accepted.error().msg.c_str());
      }
      break;
    }
    auto sock = std::make_shared<Socket>(std::move(accepted).value());
    if (pool_.backend() == exec::Backend::Thread) {
      // One OS context per connection (server infrastructure, not an async
      // call; it is not part of the spawn census).
      try {
        std::thread([this, sock] { serve_connection(std::move(*sock)); }).detach();
      } catch (const std::system_error& e) {
        LOG_ERROR("connection thread spawn failed: %s", e.what());
      }
    } else {
      pool_.submit([this, sock] { serve_connection(std::move(*sock)); });
    }
  }
}

ResponseFrame RpcServer::handle_request(const RequestFrame& req) {
  ResponseFrame resp;
  resp.request_id = req.request_id;
  requests_.fetch_add(1, std::memory_order_relaxed);

  json payload = json::parse(req.payload, nullptr, false);
  if (payload.is_discarded() || !payload.is_object()) {
    resp.status = Status::BadRequest;
    resp.payload = error_body("payload is not a json object").dump();
    return resp;
  }
  if (req.method == kStatsMethod) {
    resp.status = Status::Ok;
    resp.payload = stats_json().dump();
    return resp;
  }
  auto it = methods_.find(req.method);
  if (it == methods_.end()) {
    resp.status = Status::BadRequest;
    resp.payload = error_body("unknown method").dump();
    return resp;
  }

  Result<json> result = [&]() -> Result<json> {
    if (pool_.backend() == exec::Backend::Thread) {
      // The connection context blocks; the handler body runs on the pool.
      const Handler& h = it->second;
      const json& p = payload;
      return pool_.submit([&h, &p] { return h(p); }).get();
    }
    return it->second(payload);  // already on a pool worker fiber
  }();

  if (result.ok()) {
    resp.status = Status::Ok;
    resp.payload = result.value().dump();
  } else {
    resp.status = Status::AppError;
    resp.payload = error_body(result.error().msg).dump();
  }
  return resp;
}

void RpcServer::serve_connection(Socket sock) {
  if (!track_conn(sock.fd())) return;
  std::vector<uint8_t> buf;
  for (;;) {
    auto decoded = decode_request(std::span<const uint8_t>(buf.data(), buf.size()));
    if (decoded.status == DecodeStatus::Error) {
      LOG_DEBUG("protocol error, closing connection: %s", decoded.error.c_str());
      break;
    }
    if (decoded.status == DecodeStatus::Ok) {
      buf.erase(buf.begin(), buf.begin() + static_cast<long>(decoded.consumed));
      ResponseFrame resp = handle_request(decoded.frame);
      auto encoded = encode_response(resp.request_id, resp.status, resp.payload);
      if (!encoded.ok()) {
        LOG_ERROR("response encode failed: %s", encoded.error().msg.c_str());
        break;
      }
      auto sent = sock.send_all(encoded.value().data(), encoded.value().size(),
                                mono_ns() + kWriteBudgetNs);
      if (!sent.ok()) break;
      continue;
    }
    const size_t old = buf.size();
    buf.resize(old + kRecvChunk);
    auto n = sock.recv_some(buf.data() + old, kRecvChunk, 0);
    if (!n.ok() || n.value() == 0) break;
    buf.resize(old + n.value());
  }
  const int fd = sock.fd();
  sock.close();
  untrack_conn(fd);
}

}  // namespace fibra::wire
