#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

#include "doctest.h"

#include "common/clock.hpp"
#include "exec/pool.hpp"

using namespace fibra;
using namespace fibra::exec;

namespace {

double seconds_since(uint64_t start_ns) {
  return static_cast<double>(mono_ns() - start_ns) / 1e9;
}

void settle_inflight(WorkerPool& pool) {
  const uint64_t deadline = mono_ns() + 5 * kNsPerSec;
  while (pool.stats().inflight > 0 && mono_ns() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

}  // namespace

TEST_CASE("identity task resolves on either backend") {
  for (auto backend : {Backend::Thread, Backend::Fiber}) {
    CAPTURE(to_string(backend));
    WorkerPool pool(backend, 2);
    auto fut = pool.async_call([] { return 7; });
    auto r = fut.get();
    REQUIRE(r.ok());
    CHECK(r.value() == 7);
  }
}

TEST_CASE("four 100ms waits overlap on either backend") {
  for (auto backend : {Backend::Thread, Backend::Fiber}) {
    CAPTURE(to_string(backend));
    WorkerPool pool(backend, 2);
    const uint64_t start = mono_ns();
    std::vector<Future<int>> futs;
    for (int i = 0; i < 4; i++) {
      futs.push_back(pool.async_call([i] {
        sleep_for_ns(100 * kNsPerMs);
        return i;
      }));
    }
    for (int i = 0; i < 4; i++) {
      auto r = futs[i].get();
      REQUIRE(r.ok());
      CHECK(r.value() == i);
    }
    CHECK(seconds_since(start) < 0.2);  // serialized would be >= 0.4
  }
}

TEST_CASE("fiber backend spawns no OS contexts for async calls") {
  WorkerPool pool(Backend::Fiber, 2);
  const auto before = pool.stats();
  std::vector<Future<int>> futs;
  futs.reserve(1000);
  for (int i = 0; i < 1000; i++) {
    futs.push_back(pool.async_call([i] { return i; }));
  }
  for (auto& f : futs) REQUIRE(f.get().ok());
  const auto after = pool.stats();
  CHECK(after.os_spawned - before.os_spawned == 0);
  CHECK(after.coop_spawned - before.coop_spawned == 1000);
}

TEST_CASE("ready handle returns without waiting") {
  auto fut = Future<int>::ready(42);
  const uint64_t start = mono_ns();
  auto r = fut.get();
  REQUIRE(r.ok());
  CHECK(r.value() == 42);
  CHECK(seconds_since(start) < 0.01);
}

TEST_CASE("pending handle blocks until resolution") {
  for (auto backend : {Backend::Thread, Backend::Fiber}) {
    CAPTURE(to_string(backend));
    WorkerPool pool(backend, 1);
    const uint64_t start = mono_ns();
    auto fut = pool.async_call([] {
      sleep_for_ns(50 * kNsPerMs);
      return 1;
    });
    REQUIRE(fut.get().ok());
    const double t = seconds_since(start);
    CHECK(t >= 0.049);
    CHECK(t <= 0.065);
  }
}

TEST_CASE("failed task surfaces the error and the worker survives") {
  for (auto backend : {Backend::Thread, Backend::Fiber}) {
    CAPTURE(to_string(backend));
    WorkerPool pool(backend, 1);
    auto bad = pool.async_call([]() -> int { throw std::runtime_error("boom"); });
    auto r = bad.get();
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().msg == "boom");
    auto good = pool.async_call([] { return 5; });
    REQUIRE(good.get().ok());
  }
}

TEST_CASE("double get is a usage error") {
  auto fut = Future<int>::ready(9);
  REQUIRE(fut.get().ok());
  auto r = fut.get();
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().cls == ErrorClass::Usage);
}

TEST_CASE("yield_now round-robins tasks of one worker") {
  WorkerPool pool(Backend::Fiber, 1);
  std::vector<char> log;  // single worker, no lock needed
  auto writer = [&log](char tag) {
    return [&log, tag] {
      for (int i = 0; i < 4; i++) {
        log.push_back(tag);
        yield_now();
      }
    };
  };
  auto fa = pool.submit(writer('A'));
  auto fb = pool.submit(writer('B'));
  REQUIRE(fa.get().ok());
  REQUIRE(fb.get().ok());
  CHECK(std::string(log.begin(), log.end()) == "ABABABAB");
}

TEST_CASE("yield_now with a single runnable task resumes immediately") {
  WorkerPool pool(Backend::Fiber, 1);
  auto fut = pool.submit([] {
    yield_now();
    return 3;
  });
  auto r = fut.get();
  REQUIRE(r.ok());
  CHECK(r.value() == 3);
}

TEST_CASE("yield_now is a no-op in thread mode") {
  WorkerPool pool(Backend::Thread, 1);
  auto fut = pool.submit([] {
    yield_now();
    return 4;
  });
  REQUIRE(fut.get().ok());
  yield_now();  // off-pool caller: also a no-op
}

TEST_CASE("fresh pool has zeroed counters") {
  for (auto backend : {Backend::Thread, Backend::Fiber}) {
    WorkerPool pool(backend, 2);
    const auto s = pool.stats();
    CHECK(s.os_spawned == 0);
    CHECK(s.coop_spawned == 0);
    CHECK(s.inflight == 0);
  }
}

TEST_CASE("thread mode counts one OS context per async call") {
  WorkerPool pool(Backend::Thread, 2);
  std::vector<Future<int>> futs;
  for (int i = 0; i < 10; i++) futs.push_back(pool.async_call([i] { return i; }));
  for (auto& f : futs) REQUIRE(f.get().ok());
  settle_inflight(pool);
  const auto s = pool.stats();
  CHECK(s.os_spawned == 10);
  CHECK(s.coop_spawned == 0);
  CHECK(s.inflight == 0);
}

TEST_CASE("inflight tracks unresolved calls") {
  WorkerPool pool(Backend::Fiber, 2);
  Future<Unit> gate;
  std::vector<Future<Unit>> futs;
  for (int i = 0; i < 3; i++) {
    futs.push_back(pool.async_call([gate]() mutable {
      auto r = gate.get();
      (void)r;
    }));
  }
  const uint64_t deadline = mono_ns() + kNsPerSec;
  while (pool.stats().inflight != 3 && mono_ns() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  CHECK(pool.stats().inflight == 3);
  gate.internal_state()->resolve_value(Unit{});
  for (auto& f : futs) REQUIRE(f.get().ok());
  settle_inflight(pool);
  CHECK(pool.stats().inflight == 0);
}

TEST_CASE("backend equivalence: multiset of results matches") {
  auto run = [](Backend backend) {
    WorkerPool pool(backend, 2);
    std::vector<Future<int>> futs;
    for (int i = 0; i < 32; i++) {
      futs.push_back(pool.async_call([i] {
        if (i % 3 == 0) sleep_for_ns(1 * kNsPerMs);
        return i * i;
      }));
    }
    std::vector<int> out;
    for (auto& f : futs) {
      auto r = f.get();
      REQUIRE(r.ok());
      out.push_back(r.value());
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(run(Backend::Thread) == run(Backend::Fiber));
}

TEST_CASE("fiber workers never run two tasks at once") {
  constexpr unsigned kWorkers = 2;
  WorkerPool pool(Backend::Fiber, kWorkers);
  std::atomic<int> occupancy[kWorkers] = {};
  std::atomic<int> peak[kWorkers] = {};
  std::vector<Future<Unit>> futs;
  for (int i = 0; i < 64; i++) {
    futs.push_back(pool.async_call([&] {
      const int w = WorkerPool::current_worker_index();
      REQUIRE(w >= 0);
      for (int k = 0; k < 5; k++) {
        // The region covers the running window between scheduling points;
        // two tasks inside it at once would mean parallel execution on
        // one worker.
        const int occ = occupancy[w].fetch_add(1) + 1;
        int prev = peak[w].load();
        while (occ > prev && !peak[w].compare_exchange_weak(prev, occ)) {
        }
        const uint64_t spin_until = fibra::mono_ns() + 20'000;
        while (fibra::mono_ns() < spin_until) {
        }
        occupancy[w].fetch_sub(1);
        yield_now();
      }
    }));
  }
  for (auto& f : futs) REQUIRE(f.get().ok());
  for (unsigned w = 0; w < kWorkers; w++) CHECK(peak[w].load() <= 1);
}

TEST_CASE("async_call after shutdown fails immediately") {
  WorkerPool pool(Backend::Fiber, 1);
  pool.shutdown();
  auto fut = pool.async_call([] { return 1; });
  auto r = fut.get();
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().msg == "pool shut down");
}

TEST_CASE("submit runs on pool workers without OS spawns") {
  WorkerPool pool(Backend::Thread, 2);
  auto fut = pool.submit([] { return WorkerPool::current_worker_index(); });
  auto r = fut.get();
  REQUIRE(r.ok());
  CHECK(r.value() >= 0);
  CHECK(pool.stats().os_spawned == 0);
}

TEST_CASE("many short fibers reuse stacks") {
  WorkerPool pool(Backend::Fiber, 2);
  for (int round = 0; round < 10; round++) {
    std::vector<Future<int>> futs;
    for (int i = 0; i < 1000; i++) futs.push_back(pool.async_call([i] { return i; }));
    for (auto& f : futs) REQUIRE(f.get().ok());
  }
  CHECK(pool.stats().coop_spawned == 10'000);
}
