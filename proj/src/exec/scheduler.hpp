#pragma once

#include <boost/context/fiber.hpp>

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "exec/park.hpp"

namespace fibra::exec {

class WorkerPool;

enum class WaitStatus { Ready, Timeout };

namespace detail {

class FiberWorker;

// Per-fd readiness state. One gate per socket; it is armed with exactly one
// worker's epoll at a time and must be unregistered before the fd moves to
// another owner or closes.
struct IoGate {
  int fd = -1;
  FiberWorker* reg_worker = nullptr;
  bool registered = false;
  bool armed = false;
  FiberCtx* waiter = nullptr;
  uint64_t wait_seq = 0;
};

struct WaitSlot {
  bool fired = false;
  bool timed_out = false;
  IoGate* gate = nullptr;
};

struct FiberCtx {
  boost::context::fiber cont;  // suspended continuation
  boost::context::fiber ret;   // continuation back to the scheduler
  std::function<void()> body;
  FiberWorker* home = nullptr;
  enum class Pending : uint8_t { None, Yield, Park, Done } pending = Pending::None;
  std::atomic<int> park_state{0};  // 0 running, 1 parked, 2 notified
  uint64_t wait_seq = 0;           // bumped per wait; stale timers compare against it
  WaitSlot* wait_slot = nullptr;
  int outstanding_timers = 0;      // reap deferred until the heap drops its references
  bool done = false;
  size_t registry_pos = 0;
};

// Reusable mmap'd fiber stacks with a guard page, owned by one worker.
class StackPool {
 public:
  explicit StackPool(size_t stack_bytes);
  ~StackPool();
  StackPool(const StackPool&) = delete;
  StackPool& operator=(const StackPool&) = delete;

  boost::context::stack_context allocate();
  void deallocate(boost::context::stack_context& sctx);

 private:
  size_t stack_bytes_;
  std::vector<boost::context::stack_context> free_;
};

// One OS thread multiplexing cooperative fibers: FIFO run queue, timer heap
// on a timerfd, fd readiness via epoll, remote wakeups via an eventfd. At
// most one fiber of a worker runs at any instant.
class FiberWorker {
 public:
  FiberWorker(WorkerPool* pool, int index);
  ~FiberWorker();

  void start();
  void request_stop();
  void join();

  WorkerPool* pool() const { return pool_; }
  int index() const { return index_; }
  bool on_worker_thread() const;

  // Any thread: queue a new task body (becomes a fiber on this worker).
  // Returns false once the worker stops accepting work.
  bool enqueue_task(std::function<void()> body);

  // Worker thread only, from fiber context.
  void spawn_local(std::function<void()> body);
  void yield_current();
  WaitStatus wait_fd(IoGate& gate, uint32_t events, uint64_t deadline_ns);
  void sleep_until_ns(uint64_t deadline_ns);
  // Single park bounded by a deadline; wakes on unpark token, deadline, or
  // spuriously. Callers loop on their predicate.
  void park_until_ns(uint64_t deadline_ns);

  void park_current();          // fiber context
  void unpark(FiberCtx* f);     // any thread

  static void unregister_gate(IoGate& gate);  // any thread; idempotent

  int epoll_fd() const { return epfd_; }
  FiberCtx* current() const { return current_; }

 private:
  struct TimerEntry {
    uint64_t deadline_ns;
    FiberCtx* fiber;
    uint64_t seq;
  };
  struct TimerLater {
    bool operator()(const TimerEntry& a, const TimerEntry& b) const {
      return a.deadline_ns > b.deadline_ns;
    }
  };

  void run();
  void run_one(FiberCtx* f);
  void publish_park(FiberCtx* f);
  FiberCtx* make_fiber(std::function<void()> body);
  void reap(FiberCtx* f);
  void sweep_zombies();
  void drain_remote();
  void fire_due_timers();
  void push_timer(uint64_t deadline_ns, FiberCtx* f, uint64_t seq);
  void arm_timerfd();
  bool arm_gate(IoGate& gate, uint32_t events);
  void disarm_gate(IoGate& gate);
  void handle_io(int budget_ms);
  void wake();

  WorkerPool* pool_;
  int index_;
  std::thread thread_;
  int epfd_ = -1;
  int evfd_ = -1;
  int tfd_ = -1;
  char ev_tag_ = 0;  // epoll data tags for the eventfd / timerfd
  char tfd_tag_ = 0;

  std::deque<FiberCtx*> runq_;
  std::vector<TimerEntry> timers_;  // heap, earliest deadline on top
  uint64_t armed_deadline_ = 0;
  StackPool stacks_;
  FiberCtx* current_ = nullptr;
  uint64_t fibers_alive_ = 0;
  std::vector<FiberCtx*> zombies_;
  std::vector<FiberCtx*> registry_;  // every live fiber, for forced teardown
  uint64_t stop_deadline_ns_ = 0;

  std::mutex remote_mu_;
  std::vector<FiberCtx*> remote_unparks_;
  std::vector<std::function<void()>> inbox_;
  bool inbox_closed_ = false;

  std::atomic<bool> stopping_{false};
  friend struct CurrentFiberAccess;
};

}  // namespace detail
}  // namespace fibra::exec
