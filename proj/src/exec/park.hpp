#pragma once

// Parking interface between futures and the fiber scheduler. Parks may wake
// spuriously (stale notify tokens are allowed); every caller must re-check
// its predicate in a loop.

namespace fibra::exec {

bool on_fiber();

namespace detail {

struct FiberCtx;

FiberCtx* current_fiber();        // null when not running on a fiber
void park_current_fiber();        // switch out until unparked (or spuriously)
void unpark_fiber(FiberCtx* f);   // one-shot token; safe from any thread

}  // namespace detail
}  // namespace fibra::exec
