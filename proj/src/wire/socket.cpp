#include "wire/socket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/epoll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "common/clock.hpp"

namespace fibra::wire {

namespace {

Error errno_transport(const char* what) {
  return Error::transport(std::string(what) + ": " + std::strerror(errno));
}

Result<sockaddr_in> make_addr(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string ip = host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) {
    return Error::transport("bad address: " + host);
  }
  return addr;
}

int poll_budget_ms(uint64_t deadline_ns) {
  if (deadline_ns == 0) return -1;
  const uint64_t now = mono_ns();
  if (deadline_ns <= now) return 0;
  return static_cast<int>((deadline_ns - now + kNsPerMs - 1) / kNsPerMs);
}

}  // namespace

Socket::Socket(int fd) : fd_(fd) {}

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_), gate_(std::move(other.gate_)) {
  other.fd_ = -1;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    gate_ = std::move(other.gate_);
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    unregister_io();
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown_rdwr() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::unregister_io() {
  if (gate_) exec::detail::FiberWorker::unregister_gate(*gate_);
}

uint16_t Socket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return 0;
  return ntohs(addr.sin_port);
}

Result<Unit> Socket::wait_io(uint32_t events, uint64_t deadline_ns) {
  if (auto* f = exec::detail::current_fiber()) {
    if (!gate_) {
      gate_ = std::make_unique<exec::detail::IoGate>();
      gate_->fd = fd_;
    }
    const auto st = f->home->wait_fd(*gate_, events, deadline_ns);
    if (st == exec::WaitStatus::Timeout) return Error::timeout();
    return Unit{};
  }
  pollfd pfd{};
  pfd.fd = fd_;
  pfd.events = 0;
  if (events & EPOLLIN) pfd.events |= POLLIN;
  if (events & EPOLLOUT) pfd.events |= POLLOUT;
  for (;;) {
    const int rc = ::poll(&pfd, 1, poll_budget_ms(deadline_ns));
    if (rc > 0) return Unit{};
    if (rc == 0) return Error::timeout();
    if (errno != EINTR) return errno_transport("poll");
  }
}

Result<Socket> Socket::connect_tcp(const std::string& host, uint16_t port,
                                   uint64_t deadline_ns) {
  auto addr = make_addr(host, port);
  if (!addr.ok()) return addr.take_error();
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd < 0) return errno_transport("socket");
  Socket s(fd);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  const auto* sa = reinterpret_cast<const sockaddr*>(&addr.value());
  if (::connect(fd, sa, sizeof(sockaddr_in)) != 0) {
    if (errno != EINPROGRESS) return errno_transport("connect");
    auto w = s.wait_io(EPOLLOUT, deadline_ns);
    if (!w.ok()) return w.take_error();
    int err = 0;
    socklen_t len = sizeof(err);
    if (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) {
      return Error::transport(std::string("connect: ") + std::strerror(err ? err : errno));
    }
  }
  return s;
}

Result<Socket> Socket::listen_tcp(const std::string& host, uint16_t port, int backlog) {
  auto addr = make_addr(host, port);
  if (!addr.ok()) return addr.take_error();
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd < 0) return errno_transport("socket");
  Socket s(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const auto* sa = reinterpret_cast<const sockaddr*>(&addr.value());
  if (::bind(fd, sa, sizeof(sockaddr_in)) != 0) return errno_transport("bind");
  if (::listen(fd, backlog) != 0) return errno_transport("listen");
  return s;
}

Result<Socket> Socket::accept_conn(uint64_t deadline_ns) {
  for (;;) {
    const int cfd = ::accept4(fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
    if (cfd >= 0) {
      Socket s(cfd);
      int one = 1;
      ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    if (errno == EINTR) continue;
    if (errno != EAGAIN && errno != EWOULDBLOCK) return errno_transport("accept");
    auto w = wait_io(EPOLLIN, deadline_ns);
    if (!w.ok()) return w.take_error();
  }
}

Result<size_t> Socket::recv_some(uint8_t* buf, size_t len, uint64_t deadline_ns) {
  for (;;) {
    const ssize_t n = ::recv(fd_, buf, len, 0);
    if (n >= 0) return static_cast<size_t>(n);
    if (errno == EINTR) continue;
    if (errno != EAGAIN && errno != EWOULDBLOCK) return errno_transport("recv");
    auto w = wait_io(EPOLLIN, deadline_ns);
    if (!w.ok()) return w.take_error();
  }
}

Result<Unit> Socket::send_all(const uint8_t* buf, size_t len, uint64_t deadline_ns) {
  size_t off = 0;
  while (off < len) {
    const ssize_t n = ::send(fd_, buf + off, len - off, MSG_NOSIGNAL);
    if (n > 0) {
      off += static_cast<size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) return errno_transport("send");
    auto w = wait_io(EPOLLOUT, deadline_ns);
    if (!w.ok()) return w.take_error();
  }
  return Unit{};
}

}  // namespace fibra::wire
