#include "exec/scheduler.hpp"

#include <boost/context/detail/exception.hpp>

#include <sys/epoll.h>
#include <sys/eventfd.h>
#include <sys/mman.h>
#include <sys/timerfd.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

#include "common/clock.hpp"
#include "common/log.hpp"

namespace fibra::exec::detail {

namespace {

thread_local FiberWorker* tls_worker = nullptr;
thread_local FiberCtx* tls_fiber = nullptr;

constexpr int kParkRunning = 0;
constexpr int kParkParked = 1;
constexpr int kParkNotified = 2;

constexpr size_t kStackBytes = 256 * 1024;
constexpr uint64_t kStopGraceNs = 5 * kNsPerSec;

size_t page_size() {
  static const size_t ps = static_cast<size_t>(::sysconf(_SC_PAGESIZE));
  return ps;
}

struct PooledStackAlloc {
  StackPool* pool;
  boost::context::stack_context allocate() { return pool->allocate(); }
  void deallocate(boost::context::stack_context& sctx) { pool->deallocate(sctx); }
};

}  // namespace

FiberCtx* current_fiber() { return tls_fiber; }

void park_current_fiber() { tls_worker->park_current(); }

void unpark_fiber(FiberCtx* f) { f->home->unpark(f); }

// ---------------------------------------------------------------- StackPool

StackPool::StackPool(size_t stack_bytes) : stack_bytes_(stack_bytes) {}

boost::context::stack_context StackPool::allocate() {
  if (!free_.empty()) {
    auto sctx = free_.back();
    free_.pop_back();
    return sctx;
  }
  const size_t len = stack_bytes_ + page_size();
  void* base = ::mmap(nullptr, len, PROT_READ | PROT_WRITE,
                      MAP_PRIVATE | MAP_ANONYMOUS | MAP_STACK, -1, 0);
  if (base == MAP_FAILED) throw std::bad_alloc();
  ::mprotect(base, page_size(), PROT_NONE);  // guard page at the low end
  boost::context::stack_context sctx;
  sctx.size = len;
  sctx.sp = static_cast<char*>(base) + len;
  return sctx;
}

void StackPool::deallocate(boost::context::stack_context& sctx) {
  free_.push_back(sctx);
}

StackPool::~StackPool() {
  for (auto& sctx : free_) {
    ::munmap(static_cast<char*>(sctx.sp) - sctx.size, sctx.size);
  }
}

// --------------------------------------------------------------- FiberWorker

FiberWorker::FiberWorker(WorkerPool* pool, int index)
    : pool_(pool), index_(index), stacks_(kStackBytes) {
  epfd_ = ::epoll_create1(EPOLL_CLOEXEC);
  evfd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
  tfd_ = ::timerfd_create(CLOCK_MONOTONIC, TFD_NONBLOCK | TFD_CLOEXEC);
  epoll_event ev{};
  ev.events = EPOLLIN;
  ev.data.ptr = &ev_tag_;
  ::epoll_ctl(epfd_, EPOLL_CTL_ADD, evfd_, &ev);
  ev.data.ptr = &tfd_tag_;
  ::epoll_ctl(epfd_, EPOLL_CTL_ADD, tfd_, &ev);
}

FiberWorker::~FiberWorker() {
  request_stop();
  join();
  if (epfd_ >= 0) ::close(epfd_);
  if (evfd_ >= 0) ::close(evfd_);
  if (tfd_ >= 0) ::close(tfd_);
}

void FiberWorker::start() {
  thread_ = std::thread([this] { run(); });
}

bool FiberWorker::on_worker_thread() const { return tls_worker == this; }

void FiberWorker::request_stop() {
  bool expected = false;
  if (stopping_.compare_exchange_strong(expected, true)) {
    {
      std::lock_guard lk(remote_mu_);
      inbox_closed_ = true;
    }
    wake();
  }
}

void FiberWorker::join() {
  if (thread_.joinable()) thread_.join();
}

bool FiberWorker::enqueue_task(std::function<void()> body) {
  {
    std::lock_guard lk(remote_mu_);
    if (inbox_closed_) return false;
    inbox_.push_back(std::move(body));
  }
  wake();
  return true;
}

void FiberWorker::wake() {
  uint64_t one = 1;
  [[maybe_unused]] ssize_t n = ::write(evfd_, &one, sizeof(one));
}

FiberCtx* FiberWorker::make_fiber(std::function<void()> body) {
  auto* f = new FiberCtx;
  f->home = this;
  f->body = std::move(body);
  f->cont = boost::context::fiber(
      std::allocator_arg, PooledStackAlloc{&stacks_},
      [f](boost::context::fiber&& sched) {
        f->ret = std::move(sched);
        try {
          f->body();
        } catch (const boost::context::detail::forced_unwind&) {
          throw;
        } catch (const std::exception& e) {
          LOG_ERROR("fiber body escaped exception: %s", e.what());
        } catch (...) {
          LOG_ERROR("fiber body escaped unknown exception");
        }
        f->pending = FiberCtx::Pending::Done;
        return std::move(f->ret);
      });
  f->registry_pos = registry_.size();
  registry_.push_back(f);
  fibers_alive_++;
  return f;
}

void FiberWorker::spawn_local(std::function<void()> body) {
  runq_.push_back(make_fiber(std::move(body)));
}

void FiberWorker::yield_current() {
  current_->pending = FiberCtx::Pending::Yield;
  current_->ret = std::move(current_->ret).resume();
}

void FiberWorker::park_current() {
  FiberCtx* f = current_;
  int expected = kParkNotified;
  if (f->park_state.compare_exchange_strong(expected, kParkRunning)) {
    return;  // token was already waiting
  }
  f->pending = FiberCtx::Pending::Park;
  f->ret = std::move(f->ret).resume();
}

void FiberWorker::unpark(FiberCtx* f) {
  const int prev = f->park_state.exchange(kParkNotified);
  if (prev == kParkParked) {
    f->park_state.store(kParkRunning);
    if (on_worker_thread()) {
      runq_.push_back(f);
    } else {
      {
        std::lock_guard lk(remote_mu_);
        remote_unparks_.push_back(f);
      }
      wake();
    }
  }
}

void FiberWorker::publish_park(FiberCtx* f) {
  int expected = kParkRunning;
  if (!f->park_state.compare_exchange_strong(expected, kParkParked)) {
    // Notified while switching out: the token owner skipped the requeue.
    f->park_state.store(kParkRunning);
    runq_.push_back(f);
  }
}

void FiberWorker::run_one(FiberCtx* f) {
  current_ = f;
  tls_fiber = f;
  f->cont = std::move(f->cont).resume();
  tls_fiber = nullptr;
  current_ = nullptr;
  switch (f->pending) {
    case FiberCtx::Pending::Done:
      f->done = true;
      f->wait_seq++;
      reap(f);
      break;
    case FiberCtx::Pending::Yield:
      f->pending = FiberCtx::Pending::None;
      runq_.push_back(f);
      break;
    case FiberCtx::Pending::Park:
      f->pending = FiberCtx::Pending::None;
      publish_park(f);
      break;
    case FiberCtx::Pending::None:
      LOG_ERROR("fiber switched out without a pending action");
      runq_.push_back(f);
      break;
  }
}

void FiberWorker::reap(FiberCtx* f) {
  fibers_alive_--;
  registry_[f->registry_pos] = registry_.back();
  registry_[f->registry_pos]->registry_pos = f->registry_pos;
  registry_.pop_back();
  if (f->outstanding_timers > 0) {
    zombies_.push_back(f);
  } else {
    delete f;
  }
}

void FiberWorker::sweep_zombies() {
  if (zombies_.empty()) return;
  auto it = std::remove_if(zombies_.begin(), zombies_.end(), [](FiberCtx* f) {
    if (f->outstanding_timers == 0) {
      delete f;
      return true;
    }
    return false;
  });
  zombies_.erase(it, zombies_.end());
}

void FiberWorker::drain_remote() {
  std::vector<FiberCtx*> unparks;
  std::vector<std::function<void()>> bodies;
  {
    std::lock_guard lk(remote_mu_);
    unparks.swap(remote_unparks_);
    bodies.swap(inbox_);
  }
  for (auto* f : unparks) runq_.push_back(f);
  for (auto& b : bodies) runq_.push_back(make_fiber(std::move(b)));
}

void FiberWorker::push_timer(uint64_t deadline_ns, FiberCtx* f, uint64_t seq) {
  timers_.push_back(TimerEntry{deadline_ns, f, seq});
  std::push_heap(timers_.begin(), timers_.end(), TimerLater{});
  f->outstanding_timers++;
}

void FiberWorker::fire_due_timers() {
  if (timers_.empty()) return;
  const uint64_t now = mono_ns();
  while (!timers_.empty() && timers_.front().deadline_ns <= now) {
    std::pop_heap(timers_.begin(), timers_.end(), TimerLater{});
    TimerEntry e = timers_.back();
    timers_.pop_back();
    e.fiber->outstanding_timers--;
    if (e.fiber->done || e.fiber->wait_seq != e.seq) continue;  // stale
    WaitSlot* slot = e.fiber->wait_slot;
    if (slot == nullptr || slot->fired) continue;
    slot->fired = true;
    slot->timed_out = true;
    if (slot->gate != nullptr && slot->gate->armed) disarm_gate(*slot->gate);
    if (slot->gate != nullptr) slot->gate->waiter = nullptr;
    unpark(e.fiber);
  }
}

void FiberWorker::arm_timerfd() {
  const uint64_t next = timers_.empty() ? 0 : timers_.front().deadline_ns;
  if (next == armed_deadline_) return;
  itimerspec its{};
  if (next != 0) {
    const uint64_t t = std::max<uint64_t>(next, 1);
    its.it_value.tv_sec = static_cast<time_t>(t / kNsPerSec);
    its.it_value.tv_nsec = static_cast<long>(t % kNsPerSec);
  }
  ::timerfd_settime(tfd_, TFD_TIMER_ABSTIME, &its, nullptr);
  armed_deadline_ = next;
}

bool FiberWorker::arm_gate(IoGate& gate, uint32_t events) {
  epoll_event ev{};
  ev.events = events | EPOLLONESHOT;
  ev.data.ptr = &gate;
  int rc;
  if (gate.registered && gate.reg_worker == this) {
    rc = ::epoll_ctl(epfd_, EPOLL_CTL_MOD, gate.fd, &ev);
  } else {
    if (gate.registered) {
      ::epoll_ctl(gate.reg_worker->epfd_, EPOLL_CTL_DEL, gate.fd, nullptr);
      gate.registered = false;
    }
    rc = ::epoll_ctl(epfd_, EPOLL_CTL_ADD, gate.fd, &ev);
    if (rc == 0) {
      gate.reg_worker = this;
      gate.registered = true;
    }
  }
  gate.armed = rc == 0;
  if (rc != 0) LOG_ERROR("epoll_ctl arm failed: %s", std::strerror(errno));
  return rc == 0;
}

void FiberWorker::disarm_gate(IoGate& gate) {
  epoll_event ev{};
  ev.events = 0;
  ev.data.ptr = &gate;
  ::epoll_ctl(epfd_, EPOLL_CTL_MOD, gate.fd, &ev);
  gate.armed = false;
}

void FiberWorker::unregister_gate(IoGate& gate) {
  if (gate.registered) {
    ::epoll_ctl(gate.reg_worker->epfd_, EPOLL_CTL_DEL, gate.fd, nullptr);
    gate.registered = false;
    gate.armed = false;
    gate.reg_worker = nullptr;
    gate.waiter = nullptr;
  }
}

WaitStatus FiberWorker::wait_fd(IoGate& gate, uint32_t events, uint64_t deadline_ns) {
  FiberCtx* f = current_;
  WaitSlot slot;
  slot.gate = &gate;
  f->wait_seq++;
  f->wait_slot = &slot;
  gate.waiter = f;
  gate.wait_seq = f->wait_seq;
  if (!arm_gate(gate, events)) {
    f->wait_slot = nullptr;
    gate.waiter = nullptr;
    return WaitStatus::Ready;  // let the caller retry the syscall and surface the error
  }
  if (deadline_ns != 0) push_timer(deadline_ns, f, f->wait_seq);
  while (!slot.fired) park_current();
  f->wait_slot = nullptr;
  return slot.timed_out ? WaitStatus::Timeout : WaitStatus::Ready;
}

void FiberWorker::park_until_ns(uint64_t deadline_ns) {
  FiberCtx* f = current_;
  WaitSlot slot;
  f->wait_seq++;
  f->wait_slot = &slot;
  push_timer(deadline_ns, f, f->wait_seq);
  park_current();
  f->wait_slot = nullptr;
}

void FiberWorker::sleep_until_ns(uint64_t deadline_ns) {
  FiberCtx* f = current_;
  WaitSlot slot;
  f->wait_seq++;
  f->wait_slot = &slot;
  push_timer(deadline_ns, f, f->wait_seq);
  while (!slot.fired) park_current();
  f->wait_slot = nullptr;
}

void FiberWorker::handle_io(int budget_ms) {
  epoll_event evs[64];
  const int n = ::epoll_wait(epfd_, evs, 64, budget_ms);
  for (int i = 0; i < n; i++) {
    void* ptr = evs[i].data.ptr;
    if (ptr == &ev_tag_) {
      uint64_t v;
      [[maybe_unused]] ssize_t r = ::read(evfd_, &v, sizeof(v));
      continue;
    }
    if (ptr == &tfd_tag_) {
      uint64_t v;
      [[maybe_unused]] ssize_t r = ::read(tfd_, &v, sizeof(v));
      armed_deadline_ = 0;
      continue;
    }
    auto* gate = static_cast<IoGate*>(ptr);
    gate->armed = false;  // oneshot consumed
    FiberCtx* waiter = gate->waiter;
    if (waiter == nullptr || waiter->done || waiter->wait_seq != gate->wait_seq) continue;
    WaitSlot* slot = waiter->wait_slot;
    if (slot == nullptr || slot->fired) continue;
    slot->fired = true;
    gate->waiter = nullptr;
    unpark(waiter);
  }
}

void FiberWorker::run() {
  tls_worker = this;
  uint64_t iter = 0;
  for (;;) {
    drain_remote();
    fire_due_timers();
    if (!runq_.empty()) {
      if ((++iter & 0xF) == 0) handle_io(0);  // bound io starvation under load
      FiberCtx* f = runq_.front();
      runq_.pop_front();
      run_one(f);
      continue;
    }
    sweep_zombies();
    if (stopping_.load(std::memory_order_acquire)) {
      bool quiescent;
      {
        std::lock_guard lk(remote_mu_);
        quiescent = fibers_alive_ == 0 && inbox_.empty() && remote_unparks_.empty();
      }
      if (quiescent) break;
      const uint64_t now = mono_ns();
      if (stop_deadline_ns_ == 0) stop_deadline_ns_ = now + kStopGraceNs;
      if (now >= stop_deadline_ns_) {
        LOG_WARN("worker %d abandoning %llu unfinished fibers", index_,
                 static_cast<unsigned long long>(fibers_alive_));
        break;
      }
      arm_timerfd();
      handle_io(50);
      continue;
    }
    arm_timerfd();
    handle_io(-1);
  }
  // Forced teardown: unwind whatever is left so stack-held resources close.
  timers_.clear();
  sweep_zombies();
  std::vector<FiberCtx*> leftovers = registry_;
  for (auto* f : leftovers) {
    f->done = true;
    f->wait_seq++;
    f->cont = boost::context::fiber();  // destroys and unwinds the suspended fiber
  }
  for (auto* f : leftovers) delete f;
  registry_.clear();
  for (auto* f : zombies_) delete f;
  zombies_.clear();
  tls_worker = nullptr;
}

}  // namespace fibra::exec::detail
