#include "exec/pool.hpp"

#include <time.h>

#include <cerrno>
#include <chrono>

#include "common/clock.hpp"
#include "common/log.hpp"

namespace fibra::exec {

namespace detail {

// Set for pool worker threads (Thread backend) and spawned call threads.
// Fiber contexts resolve pool/index through the current fiber instead.
thread_local WorkerPool* tls_pool = nullptr;
thread_local int tls_worker_index = -1;

ThreadWorkers::ThreadWorkers(WorkerPool* pool, unsigned size) : pool_(pool) {
  threads_.reserve(size);
  for (unsigned i = 0; i < size; i++) {
    threads_.emplace_back([this, i] { run(static_cast<int>(i)); });
  }
}

ThreadWorkers::~ThreadWorkers() { stop(); }

bool ThreadWorkers::enqueue(std::function<void()> fn) {
  {
    std::lock_guard lk(mu_);
    if (closed_) return false;
    queue_.push_back(std::move(fn));
  }
  cv_.notify_one();
  return true;
}

void ThreadWorkers::stop() {
  {
    std::lock_guard lk(mu_);
    if (closed_) return;
    closed_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadWorkers::run(int index) {
  tls_pool = pool_;
  tls_worker_index = index;
  for (;;) {
    std::function<void()> fn;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [this] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) return;  // closed and drained
      fn = std::move(queue_.front());
      queue_.pop_front();
    }
    fn();
  }
}

}  // namespace detail

WorkerPool::WorkerPool(Backend backend, unsigned size)
    : backend_(backend),
      size_(size == 0 ? 1 : size),
      counters_(std::make_shared<detail::PoolCounters>()) {
  if (backend_ == Backend::Thread) {
    thread_workers_ = std::make_unique<detail::ThreadWorkers>(this, size_);
  } else {
    fiber_workers_.reserve(size_);
    for (unsigned i = 0; i < size_; i++) {
      fiber_workers_.push_back(std::make_unique<detail::FiberWorker>(this, static_cast<int>(i)));
    }
    for (auto& w : fiber_workers_) w->start();
  }
}

WorkerPool::~WorkerPool() { shutdown(); }

void WorkerPool::shutdown() {
  bool expected = false;
  if (!stopped_.compare_exchange_strong(expected, true)) return;
  if (backend_ == Backend::Thread) {
    thread_workers_->stop();
    // Spawned call threads are detached; give in-flight calls a bounded
    // window to resolve so counters and handles settle.
    const uint64_t deadline = mono_ns() + 5 * kNsPerSec;
    while (counters_->inflight.load(std::memory_order_relaxed) > 0 && mono_ns() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    const int64_t left = counters_->inflight.load(std::memory_order_relaxed);
    if (left > 0) {
      LOG_WARN("pool shutdown with %lld async calls still in flight", static_cast<long long>(left));
    }
  } else {
    for (auto& w : fiber_workers_) w->request_stop();
    for (auto& w : fiber_workers_) w->join();
  }
}

ExecStats WorkerPool::stats() const {
  return ExecStats{counters_->os_spawned.load(std::memory_order_relaxed),
                   counters_->coop_spawned.load(std::memory_order_relaxed),
                   counters_->inflight.load(std::memory_order_relaxed)};
}

void WorkerPool::dispatch_os_thread(std::function<void()> task, std::function<void(Error)> fail) {
  auto pool = this;
  try {
    std::thread t([task = std::move(task), pool] {
      detail::tls_pool = pool;
      task();
    });
    counters_->os_spawned.fetch_add(1, std::memory_order_relaxed);
    t.detach();
  } catch (const std::system_error& e) {
    fail(Error::app(std::string("thread spawn failed: ") + e.what()));
  }
}

void WorkerPool::dispatch_fiber(std::function<void()> task, std::function<void(Error)> fail,
                                bool prefer_local) {
  auto* w = pick_fiber_worker(prefer_local);
  if (w->on_worker_thread() && detail::current_fiber() != nullptr) {
    counters_->coop_spawned.fetch_add(1, std::memory_order_relaxed);
    w->spawn_local(std::move(task));
    return;
  }
  if (w->enqueue_task(std::move(task))) {
    counters_->coop_spawned.fetch_add(1, std::memory_order_relaxed);
  } else {
    fail(Error::app("pool shut down"));
  }
}

void WorkerPool::dispatch_queue(std::function<void()> task, std::function<void(Error)> fail) {
  if (!thread_workers_->enqueue(std::move(task))) {
    fail(Error::app("pool shut down"));
  }
}

detail::FiberWorker* WorkerPool::pick_fiber_worker(bool prefer_local) {
  // An async call made from a fiber of this pool stays on its own worker
  // (no work stealing); submissions round-robin across workers.
  if (auto* f = detail::current_fiber();
      prefer_local && f != nullptr && f->home->pool() == this) {
    return f->home;
  }
  const unsigned i = rr_next_.fetch_add(1, std::memory_order_relaxed) % size_;
  return fiber_workers_[i].get();
}

WorkerPool* WorkerPool::current() {
  if (auto* f = detail::current_fiber()) return f->home->pool();
  return detail::tls_pool;
}

int WorkerPool::current_worker_index() {
  if (auto* f = detail::current_fiber()) return f->home->index();
  return detail::tls_worker_index;
}

void yield_now() {
  if (auto* f = detail::current_fiber()) f->home->yield_current();
}

void sleep_until_ns(uint64_t deadline_ns) {
  if (auto* f = detail::current_fiber()) {
    f->home->sleep_until_ns(deadline_ns);
    return;
  }
  timespec ts{};
  ts.tv_sec = static_cast<time_t>(deadline_ns / kNsPerSec);
  ts.tv_nsec = static_cast<long>(deadline_ns % kNsPerSec);
  while (::clock_nanosleep(CLOCK_MONOTONIC, TIMER_ABSTIME, &ts, nullptr) == EINTR) {
  }
}

void sleep_for_ns(uint64_t ns) { sleep_until_ns(mono_ns() + ns); }

bool on_fiber() { return detail::current_fiber() != nullptr; }

}  // namespace fibra::exec
