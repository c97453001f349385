#pragma once

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "common/result.hpp"
#include "exec/park.hpp"

namespace fibra::exec {

// One-shot result slot. Resolved exactly once (single resolver); the result
// is retrievable exactly once. get() blocks the calling OS thread, or parks
// the calling fiber without occupying its worker.
enum class HandleState : uint8_t { Pending, Ready, Failed };

namespace detail {

template <class T>
struct SharedState {
  std::mutex mu;
  HandleState st = HandleState::Pending;
  std::optional<T> value;
  Error err{ErrorClass::App, ""};
  bool consumed = false;
  std::condition_variable cv;                // blocked OS-thread waiters
  std::vector<FiberCtx*> fiber_waiters;      // parked cooperative waiters
  std::function<void()> completion;          // fires once, after resolution

  void resolve_value(T v) { resolve(HandleState::Ready, std::move(v), {}); }
  void resolve_error(Error e) { resolve(HandleState::Failed, std::nullopt, std::move(e)); }

 private:
  void resolve(HandleState s, std::optional<T> v, Error e) {
    std::vector<FiberCtx*> fibers;
    std::function<void()> done;
    {
      std::lock_guard lk(mu);
      st = s;
      value = std::move(v);
      err = std::move(e);
      fibers.swap(fiber_waiters);
      done.swap(completion);
    }
    cv.notify_all();
    for (auto* f : fibers) unpark_fiber(f);
    if (done) done();
  }
};

}  // namespace detail

template <class T>
class Future {
 public:
  Future() : st_(std::make_shared<detail::SharedState<T>>()) {}

  static Future ready(T v) {
    Future f;
    f.st_->resolve_value(std::move(v));
    return f;
  }
  static Future failed(Error e) {
    Future f;
    f.st_->resolve_error(std::move(e));
    return f;
  }

  HandleState state() const {
    std::lock_guard lk(st_->mu);
    return st_->st;
  }

  // Blocking get. A PENDING handle parks a fiber caller (the worker keeps
  // running other tasks) or blocks a thread caller on the condvar.
  Result<T> get() {
    auto st = st_;
    std::unique_lock lk(st->mu);
    if (st->consumed) return Error::usage("result already retrieved");
    while (st->st == HandleState::Pending) {
      if (auto* f = detail::current_fiber()) {
        st->fiber_waiters.push_back(f);
        lk.unlock();
        detail::park_current_fiber();
        lk.lock();
        auto& ws = st->fiber_waiters;
        ws.erase(std::remove(ws.begin(), ws.end(), f), ws.end());
      } else {
        st->cv.wait(lk);
      }
    }
    st->consumed = true;
    if (st->st == HandleState::Ready) {
      T v = std::move(*st->value);
      st->value.reset();
      return v;
    }
    return st->err;
  }

  // Completion hook for open-loop recording: runs on the resolver's context
  // immediately after resolution (or inline if already resolved). One hook
  // per handle.
  void on_complete(std::function<void()> fn) {
    bool now = false;
    {
      std::lock_guard lk(st_->mu);
      if (st_->st == HandleState::Pending) {
        st_->completion = std::move(fn);
      } else {
        now = true;
      }
    }
    if (now) fn();
  }

  std::shared_ptr<detail::SharedState<T>> internal_state() const { return st_; }

 private:
  std::shared_ptr<detail::SharedState<T>> st_;
};

template <class T>
struct is_result : std::false_type {};
template <class T>
struct is_result<Result<T>> : std::true_type {};

// What a task returning R resolves to: Result<U> flattens to U, void to Unit.
template <class R>
struct future_value {
  using type = R;
};
template <>
struct future_value<void> {
  using type = Unit;
};
template <class U>
struct future_value<Result<U>> {
  using type = U;
};
template <class R>
using future_value_t = typename future_value<R>::type;

}  // namespace fibra::exec
