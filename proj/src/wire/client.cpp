#include "wire/client.hpp"

#include <algorithm>

#include "common/clock.hpp"
#include "common/log.hpp"

namespace fibra::wire {

namespace {
constexpr size_t kRecvChunk = 4096;
constexpr uint64_t kForeverNs = 3600ull * kNsPerSec;
}  // namespace

ConnectionPool::ConnectionPool(std::string host, uint16_t port, ClientConfig cfg)
    : host_(std::move(host)), port_(port), cfg_(cfg) {
  if (cfg_.pool_capacity == 0) cfg_.pool_capacity = 1;
}

ConnectionPool::~ConnectionPool() = default;

Result<std::unique_ptr<Connection>> ConnectionPool::checkout(uint64_t deadline_ns) {
  if (deadline_ns == 0) deadline_ns = mono_ns() + kForeverNs;
  std::unique_lock lk(mu_);
  for (;;) {
    if (!idle_.empty()) {
      auto conn = std::move(idle_.back());
      idle_.pop_back();
      return conn;
    }
    if (total_ < cfg_.pool_capacity) {
      total_++;
      lk.unlock();
      auto sock = Socket::connect_tcp(host_, port_, deadline_ns);
      if (!sock.ok()) {
        lk.lock();
        total_--;
        if (!waiters_.empty() && total_ < cfg_.pool_capacity) {
          total_++;
          Waiter* w = waiters_.front();
          waiters_.pop_front();
          w->create_permit = true;
          w->satisfied = true;
          if (w->fiber != nullptr) {
            exec::detail::unpark_fiber(w->fiber);
          } else {
            cv_.notify_all();
          }
        }
        return sock.take_error();
      }
      auto conn = std::make_unique<Connection>();
      conn->sock = std::move(sock).value();
      return conn;
    }
    Waiter w;
    w.fiber = exec::detail::current_fiber();
    waiters_.push_back(&w);
    while (!w.satisfied && mono_ns() < deadline_ns) {
      if (w.fiber != nullptr) {
        lk.unlock();
        w.fiber->home->park_until_ns(deadline_ns);
        lk.lock();
      } else {
        cv_.wait_until(lk, std::chrono::steady_clock::time_point(
                               std::chrono::nanoseconds(deadline_ns)));
      }
    }
    auto it = std::find(waiters_.begin(), waiters_.end(), &w);
    if (it != waiters_.end()) waiters_.erase(it);
    if (!w.satisfied) return Error::timeout("timeout waiting for connection");
    if (w.granted != nullptr) return std::move(w.granted);
    if (w.create_permit) {
      lk.unlock();
      auto sock = Socket::connect_tcp(host_, port_, deadline_ns);
      if (!sock.ok()) {
        lk.lock();
        total_--;
        return sock.take_error();
      }
      auto conn = std::make_unique<Connection>();
      conn->sock = std::move(sock).value();
      return conn;
    }
    // satisfied without grant or permit should not happen; loop re-checks
  }
}

void ConnectionPool::give_back(std::unique_ptr<Connection> conn, bool reusable) {
  if (reusable && conn != nullptr && conn->sock.valid()) {
    // No epoll registration may outlive the checkout: the next user can sit
    // on a different worker.
    conn->sock.unregister_io();
    conn->reused = true;
    conn->rxbuf.clear();
    std::unique_lock lk(mu_);
    if (!waiters_.empty()) {
      Waiter* w = waiters_.front();
      waiters_.pop_front();
      w->granted = std::move(conn);
      w->satisfied = true;
      auto* fiber = w->fiber;
      lk.unlock();
      if (fiber != nullptr) {
        exec::detail::unpark_fiber(fiber);
      } else {
        cv_.notify_all();
      }
      return;
    }
    idle_.push_back(std::move(conn));
    return;
  }
  conn.reset();
  std::unique_lock lk(mu_);
  total_--;
  if (!waiters_.empty() && total_ < cfg_.pool_capacity) {
    total_++;
    Waiter* w = waiters_.front();
    waiters_.pop_front();
    w->create_permit = true;
    w->satisfied = true;
    auto* fiber = w->fiber;
    lk.unlock();
    if (fiber != nullptr) {
      exec::detail::unpark_fiber(fiber);
    } else {
      cv_.notify_all();
    }
  }
}

RpcClient::RpcClient(exec::WorkerPool& pool, ClientConfig cfg) : pool_(pool), cfg_(cfg) {}

void RpcClient::add_target(const std::string& name, const std::string& host, uint16_t port) {
  targets_[name] = std::make_unique<ConnectionPool>(host, port, cfg_);
}

bool RpcClient::has_target(const std::string& name) const {
  return targets_.count(name) != 0;
}

exec::Future<json> RpcClient::call(const std::string& target, const std::string& method,
                                   json payload) {
  auto it = targets_.find(target);
  if (it == targets_.end()) {
    return exec::Future<json>::failed(Error::app("unknown target: " + target));
  }
  ConnectionPool* tp = it->second.get();
  return pool_.async_call(
      [this, tp, method, text = payload.dump()] { return exchange(*tp, method, text); });
}

Result<json> RpcClient::call_sync(const std::string& target, const std::string& method,
                                  json payload) {
  return call(target, method, std::move(payload)).get();
}

Result<json> RpcClient::exchange(ConnectionPool& target_pool, const std::string& method,
                                 const std::string& payload_text) {
  const uint64_t deadline_ns = mono_ns() + uint64_t(cfg_.timeout_ms) * kNsPerMs;
  const uint64_t request_id = next_id_.fetch_add(1, std::memory_order_relaxed);
  for (int attempt = 0; attempt < 2; attempt++) {
    auto co = target_pool.checkout(deadline_ns);
    if (!co.ok()) return co.take_error();
    auto conn = std::move(co).value();
    const bool was_reused = conn->reused;
    auto r = exchange_once(*conn, request_id, method, payload_text, deadline_ns);
    if (r.ok()) {
      target_pool.give_back(std::move(conn), true);
      return r;
    }
    Error e = r.take_error();
    if (e.cls == ErrorClass::App) {
      // The server answered; the connection stays healthy.
      target_pool.give_back(std::move(conn), true);
      return e;
    }
    target_pool.give_back(std::move(conn), false);
    // A pooled connection the server closed while idle fails on the send
    // path; retry once with a fresh connection. Anything later is not
    // safely retryable.
    const bool stale_reuse = was_reused && e.cls == ErrorClass::Transport &&
                             e.msg.rfind("send", 0) == 0 && attempt == 0;
    if (!stale_reuse) return e;
  }
  return Error::transport("retry exhausted");
}

Result<json> RpcClient::exchange_once(Connection& conn, uint64_t request_id,
                                      const std::string& method,
                                      const std::string& payload_text,
                                      uint64_t deadline_ns) {
  auto encoded = encode_request(request_id, method, payload_text);
  if (!encoded.ok()) return encoded.take_error();
  auto sent = conn.sock.send_all(encoded.value().data(), encoded.value().size(), deadline_ns);
  if (!sent.ok()) return sent.take_error();

  auto& buf = conn.rxbuf;
  for (;;) {
    auto decoded = decode_response(std::span<const uint8_t>(buf.data(), buf.size()));
    if (decoded.status == DecodeStatus::Error) {
      return Error::transport("protocol: " + decoded.error);
    }
    if (decoded.status == DecodeStatus::Ok) {
      if (decoded.frame.request_id != request_id) {
        return Error::transport("response id mismatch");
      }
      buf.erase(buf.begin(), buf.begin() + static_cast<long>(decoded.consumed));
      json body = json::parse(decoded.frame.payload, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        return Error::transport("response payload is not a json object");
      }
      if (decoded.frame.status == Status::Ok) return body;
      std::string msg = body.contains("error") && body["error"].is_string()
                            ? body["error"].get<std::string>()
                            : decoded.frame.payload;
      return Error::app(std::move(msg));
    }
    const size_t old = buf.size();
    buf.resize(old + kRecvChunk);
    auto n = conn.sock.recv_some(buf.data() + old, kRecvChunk, deadline_ns);
    if (!n.ok()) {
      buf.resize(old);
      return n.take_error();
    }
    if (n.value() == 0) {
      buf.resize(old);
      return Error::transport("recv: peer closed");
    }
    buf.resize(old + n.value());
  }
}

}  // namespace fibra::wire
