#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "exec/backend.hpp"
#include "exec/future.hpp"
#include "exec/scheduler.hpp"

namespace fibra::exec {

// Spawn census. os_spawned counts OS execution contexts created for async
// calls (never pool startup); coop_spawned counts cooperative tasks created.
struct ExecStats {
  uint64_t os_spawned = 0;
  uint64_t coop_spawned = 0;
  int64_t inflight = 0;
};

namespace detail {

struct PoolCounters {
  std::atomic<uint64_t> os_spawned{0};
  std::atomic<uint64_t> coop_spawned{0};
  std::atomic<int64_t> inflight{0};
};

// Fixed set of OS workers draining one task queue (the Thread backend's
// run-on-pool path; async calls do not go through it).
class ThreadWorkers {
 public:
  ThreadWorkers(WorkerPool* pool, unsigned size);
  ~ThreadWorkers();
  bool enqueue(std::function<void()> fn);
  void stop();

 private:
  void run(int index);
  WorkerPool* pool_ = nullptr;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool closed_ = false;
};

}  // namespace detail

// One asynchronous-call interface, two interchangeable execution backends.
//
// async_call: Thread spawns a fresh OS thread per call; Fiber enqueues a
// cooperative task on the calling worker (or a round-robin worker when the
// caller is not on this pool).
// submit: runs the task on the pool's workers in both modes (server dispatch
// and other run-on-pool work).
class WorkerPool {
 public:
  WorkerPool(Backend backend, unsigned size);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  Backend backend() const { return backend_; }
  unsigned size() const { return size_; }
  ExecStats stats() const;
  void shutdown();
  bool shut_down() const { return stopped_.load(std::memory_order_acquire); }

  template <class F>
  auto async_call(F fn) -> Future<future_value_t<decltype(fn())>> {
    using V = future_value_t<decltype(fn())>;
    if (shut_down()) return Future<V>::failed(Error::app("pool shut down"));
    Future<V> fut;
    counters_->inflight.fetch_add(1, std::memory_order_relaxed);
    auto task = make_task<V>(fut, std::move(fn));
    if (backend_ == Backend::Thread) {
      dispatch_os_thread(std::move(task), make_fail(fut));
    } else {
      dispatch_fiber(std::move(task), make_fail(fut), /*prefer_local=*/true);
    }
    return fut;
  }

  template <class F>
  auto submit(F fn) -> Future<future_value_t<decltype(fn())>> {
    using V = future_value_t<decltype(fn())>;
    if (shut_down()) return Future<V>::failed(Error::app("pool shut down"));
    Future<V> fut;
    counters_->inflight.fetch_add(1, std::memory_order_relaxed);
    auto task = make_task<V>(fut, std::move(fn));
    if (backend_ == Backend::Thread) {
      dispatch_queue(std::move(task), make_fail(fut));
    } else {
      dispatch_fiber(std::move(task), make_fail(fut), /*prefer_local=*/false);
    }
    return fut;
  }

  // Pool of the calling context (worker thread or fiber), else null.
  static WorkerPool* current();
  // Index of the calling pool worker, -1 when not on one.
  static int current_worker_index();

  detail::FiberWorker* fiber_worker(unsigned i) { return fiber_workers_[i].get(); }

 private:
  template <class V, class F>
  std::function<void()> make_task(Future<V> fut, F fn) {
    auto counters = counters_;
    auto st = fut.internal_state();
    return [st, counters, fn = std::move(fn)]() mutable {
      using R = decltype(fn());
      try {
        if constexpr (std::is_void_v<R>) {
          fn();
          st->resolve_value(Unit{});
        } else if constexpr (is_result<R>::value) {
          auto r = fn();
          if (r.ok()) {
            st->resolve_value(std::move(r).value());
          } else {
            st->resolve_error(r.take_error());
          }
        } else {
          st->resolve_value(fn());
        }
      } catch (const std::exception& e) {
        st->resolve_error(Error::app(e.what()));
      } catch (...) {
        st->resolve_error(Error::app("task failed"));
      }
      counters->inflight.fetch_sub(1, std::memory_order_relaxed);
    };
  }

  // Resolves the handle FAILED when a task cannot be dispatched at all.
  template <class V>
  std::function<void(Error)> make_fail(Future<V>& fut) {
    auto st = fut.internal_state();
    auto counters = counters_;
    return [st, counters](Error e) {
      st->resolve_error(std::move(e));
      counters->inflight.fetch_sub(1, std::memory_order_relaxed);
    };
  }

  void dispatch_os_thread(std::function<void()> task, std::function<void(Error)> fail);
  void dispatch_fiber(std::function<void()> task, std::function<void(Error)> fail,
                      bool prefer_local);
  void dispatch_queue(std::function<void()> task, std::function<void(Error)> fail);
  detail::FiberWorker* pick_fiber_worker(bool prefer_local);

  Backend backend_;
  unsigned size_;
  std::shared_ptr<detail::PoolCounters> counters_;
  std::unique_ptr<detail::ThreadWorkers> thread_workers_;
  std::vector<std::unique_ptr<detail::FiberWorker>> fiber_workers_;
  std::atomic<unsigned> rr_next_{0};
  std::atomic<bool> stopped_{false};
};

// Cooperative scheduling point: another runnable task on the same worker
// runs before the caller resumes. No-op off a fiber (Thread mode included).
void yield_now();

// Park (fiber) or block (thread) until the monotonic deadline.
void sleep_until_ns(uint64_t deadline_ns);
void sleep_for_ns(uint64_t ns);

}  // namespace fibra::exec
